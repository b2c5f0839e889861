"""Command line: run, extract, verify, report, replay.

Exit codes: 0 success, 1 configuration error, 2 I/O or store error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .core import Mode, Outcome, Problem, Trajectory
from .errors import ConfigError, FormsynthError, SchemaVersionError, UnknownProblem
from .extraction import export_datasets
from .pipeline import Workflow, run_problem
from .prompts import Templates
from .config import RunConfig, load_config
from .replay import format_trajectory
from .reporting import attribute_outcome, bucket_problem, compute_metrics, emit_report, render_text
from .store import TrajectoryStore, read_votes, write_votes
from .verification import VoteRecord, record_decision, verify_statement

log = logging.getLogger("formsynth")

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2


def _run_one(workflow: Workflow, store: TrajectoryStore, problem: Problem, mode: Mode) -> Optional[Trajectory]:
    writer = store.writer(problem, mode)
    try:
        trajectory = run_problem(workflow, problem, mode, sink=writer)
    except FormsynthError as exc:
        # the file stays without a summary, so a later run retries the problem
        log.error("problem %s aborted: %s", problem.id, exc)
        writer.close()
        return None
    writer.finish(trajectory)
    return trajectory


def cmd_run(config: RunConfig) -> list[Trajectory]:
    """Run every problem not already terminal in the store."""
    store = TrajectoryStore(config.paths.store)
    pending = [p for p in config.problems() if not store.is_terminal(p.id)]
    workflow = config.workflow()
    if config.problem_workers == 1:
        done = [_run_one(workflow, store, p, config.mode) for p in pending]
    else:
        with ThreadPoolExecutor(max_workers=config.problem_workers) as pool:
            done = list(pool.map(lambda p: _run_one(workflow, store, p, config.mode), pending))
    return [t for t in done if t is not None]


def cmd_extract(store: TrajectoryStore, out_dir: Path, successful_only: bool = False) -> dict:
    return export_datasets((t for _, t in store.completed()), out_dir, successful_only=successful_only)


def cmd_verify(store: TrajectoryStore, config: RunConfig) -> list[VoteRecord]:
    """Judge every verified statement; baseline stores vote with the whole panel."""
    gateway = config.gateway()
    templates = Templates(config.templates_dir)
    generator = config.generator()
    records = []
    for problem, trajectory in store.completed():
        if trajectory.outcome is not Outcome.VERIFIED:
            continue
        statement = trajectory.events_of("finished")[-1].data["statement"]
        record, _ = verify_statement(gateway, templates, config.panel, problem, statement, generator,
                                     exclude=trajectory.mode is Mode.AGENTIC, max_workers=config.judge_workers)
        records.append(record)
    write_votes(records, config.paths.votes_file)
    return records


def cmd_report(store: TrajectoryStore, votes: Optional[Sequence[VoteRecord]], config: RunConfig,
               out_dir: Optional[Path] = None) -> str:
    runs = store.completed()
    if not runs:
        raise FormsynthError("the store holds no finished trajectories")
    decisions = {r.problem_id: bool(record_decision(r)) for r in votes} if votes is not None else {}
    metrics = compute_metrics([t for _, t in runs], votes, config.prices)
    attributions = [attribute_outcome(t, decisions.get(p.id)) for p, t in runs]
    buckets = []
    for p, t in runs:
        ok = decisions.get(p.id, False) if votes is not None else t.outcome is Outcome.VERIFIED
        buckets.append(bucket_problem(p, ok))
    report = emit_report(metrics, attributions, buckets, out_dir or config.paths.reports)
    return render_text(metrics, report["tables"])


def cmd_replay(store: TrajectoryStore, problem_id: str) -> str:
    problem, trajectory = store.load(problem_id)
    return format_trajectory(problem, trajectory)


# -- argument handling ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="formsynth", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_config: bool = True) -> None:
        p.add_argument("--config", type=Path, required=needs_config, help="run configuration (JSON)")
        p.add_argument("--store", type=Path, help="trajectory store directory (overrides paths.store)")

    p = sub.add_parser("run", help="run problems through the pipeline")
    common(p)
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--world", help="use a built-in offline world instead of the configured backends")
    p.add_argument("--problems", type=Path)
    p.add_argument("--workers", type=int, help="problems run at once")
    p.add_argument("--max-parallel-subgoals", type=int)

    p = sub.add_parser("extract", help="export the five training datasets")
    common(p, needs_config=False)
    p.add_argument("--out", type=Path)
    p.add_argument("--successful-only", action="store_true", help="only mine trajectories that ended verified")

    p = sub.add_parser("verify", help="collect judge votes for verified statements")
    common(p)
    p.add_argument("--votes", type=Path)

    p = sub.add_parser("report", help="metrics, attribution and bucket tables")
    common(p)
    p.add_argument("--votes", type=Path)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("replay", help="print one stored trajectory")
    common(p, needs_config=False)
    p.add_argument("problem_id")
    return parser


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    paths = config.paths
    if getattr(args, "store", None):
        paths = dataclasses.replace(paths, store=args.store)
    if getattr(args, "problems", None):
        paths = dataclasses.replace(paths, problems=args.problems)
    if getattr(args, "votes", None):
        paths = dataclasses.replace(paths, votes=args.votes)
    config.paths = paths
    if getattr(args, "mode", None):
        config.mode = Mode(args.mode)
    if getattr(args, "world", None):
        config.mock = {"world": args.world}
    if getattr(args, "workers", None):
        config.problem_workers = args.workers
    if getattr(args, "max_parallel_subgoals", None):
        config.budgets = dataclasses.replace(config.budgets, max_parallel_subgoals=args.max_parallel_subgoals)
    config.validate()
    return config


def _store_dir(args: argparse.Namespace, config: Optional[RunConfig]) -> Path:
    if args.store:
        return args.store
    if config is not None:
        return config.paths.store
    raise ConfigError("--store or --config is required")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _apply_overrides(load_config(args.config), args) if args.config else None
        store = TrajectoryStore(_store_dir(args, config))
        if args.command == "run":
            done = cmd_run(config)
            print(f"{len(done)} problem(s) run, store at {config.paths.store}")
        elif args.command == "extract":
            out = args.out or (config.paths.datasets if config else None)
            if out is None:
                raise ConfigError("--out or --config is required")
            manifest = cmd_extract(store, out, args.successful_only)
            for name, counts in manifest.items():
                print(f"{name:12s} successful {counts['from_successful']:5d}  failed {counts['from_failed']:5d}")
        elif args.command == "verify":
            records = cmd_verify(store, config)
            print(f"{len(records)} vote record(s) written to {config.paths.votes_file}")
        elif args.command == "report":
            votes_file = config.paths.votes_file
            votes = read_votes(votes_file) if votes_file.exists() else None
            sys.stdout.write(cmd_report(store, votes, config, args.out))
        elif args.command == "replay":
            sys.stdout.write(cmd_replay(store, args.problem_id))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, SchemaVersionError, UnknownProblem, FormsynthError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
