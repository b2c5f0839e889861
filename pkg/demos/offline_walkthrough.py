"""Run the built-in offline worlds end to end and print what each stage leaves behind.

    python3 demos/offline_walkthrough.py [--keep DIR]

Nothing here talks to a network or a Lean toolchain: model replies come from
scripted worlds and proofs are checked by the rule-based mock checker.
"""

import argparse
import json
import tempfile
from pathlib import Path

from formsynth.cli import cmd_extract, cmd_replay, cmd_report, cmd_run, cmd_verify
from formsynth.config import RunConfig
from formsynth.store import TrajectoryStore


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--keep", type=Path, help="write everything here instead of a temporary directory")
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        root = args.keep or Path(tmp)
        config = RunConfig.from_dict({"mock": {"world": "all"}}, base_dir=root)

        runs = cmd_run(config)
        print(f"ran {len(runs)} problems into {config.paths.store}\n")
        for t in runs:
            finished = t.events[-1].data
            print(f"  {t.problem_id:6s} {t.outcome.value:16s} via={finished['via']}  "
                  f"expert={t.expert_calls} general={t.general_calls}")

        store = TrajectoryStore(config.paths.store)
        print("\nreplay of the delta run (failed overall, but two subgoals were proved):\n")
        print(cmd_replay(store, "delta"))

        manifest = cmd_extract(store, config.paths.datasets)
        print("dataset yield by origin:")
        print(json.dumps(manifest, indent=2))

        records = cmd_verify(store, config)
        print(f"\n{len(records)} verified statements judged by the mock panel\n")
        print(cmd_report(store, records, config))


if __name__ == "__main__":
    main()
