"""On-disk trajectory store and vote files.

One JSONL file per problem: a header line, one line per event written as
the run goes, then a summary line once the run is terminal. A file without
a summary is an interrupted run and is started over on resume.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional, Union
from urllib.parse import quote

from .core import (
    Mode,
    Outcome,
    Problem,
    Trajectory,
    TrajectoryEvent,
    UsageRecord,
    append_event,
    dumps_line,
    validate_problem,
)
from .errors import SchemaVersionError, UnknownProblem
from .verification import VoteRecord

SCHEMA_VERSION = "1.0"
SUFFIX = ".trajectory.jsonl"


def _check_version(version: object, path: Path) -> None:
    major = str(version).split(".", 1)[0]
    if major != SCHEMA_VERSION.split(".", 1)[0]:
        raise SchemaVersionError(f"{path}: unsupported schema version {version!r} (this build reads {SCHEMA_VERSION})")


class TrajectoryWriter:
    """Incremental writer for one problem's file; use as the run's event sink."""

    def __init__(self, path: Path, problem: Problem, mode: Mode):
        self.path = path
        self._fh: Optional[IO[str]] = open(path, "w", encoding="utf-8")
        self._line({"type": "header", "schema_version": SCHEMA_VERSION, "problem": problem.to_dict(),
                    "mode": mode.value})

    def _line(self, obj: dict) -> None:
        assert self._fh is not None, "writer already closed"
        self._fh.write(dumps_line(obj) + "\n")
        self._fh.flush()

    def __call__(self, event: TrajectoryEvent) -> None:
        self._line({"type": "event", **event.to_dict()})

    def finish(self, trajectory: Trajectory) -> None:
        self._line({"type": "summary", "outcome": trajectory.outcome.value if trajectory.outcome else None,
                    "usage": [u.to_dict() for u in trajectory.usage]})
        self.close()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


class TrajectoryStore:
    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    def path_for(self, problem_id: str) -> Path:
        return self.root / f"{quote(problem_id, safe='')}{SUFFIX}"

    def writer(self, problem: Problem, mode: Mode) -> TrajectoryWriter:
        self.root.mkdir(parents=True, exist_ok=True)
        return TrajectoryWriter(self.path_for(problem.id), problem, mode)

    def files(self) -> list[Path]:
        if not self.root.exists():
            return []
        return sorted(self.root.glob(f"*{SUFFIX}"))

    def is_terminal(self, problem_id: str) -> bool:
        path = self.path_for(problem_id)
        if not path.exists():
            return False
        try:
            return self._read(path)[1].outcome is not None
        except (ValueError, KeyError):
            return False

    @staticmethod
    def _read(path: Path) -> tuple[Problem, Trajectory]:
        problem = trajectory = None
        with open(path, encoding="utf-8") as fh:
            for raw in fh:
                if not raw.strip():
                    continue
                line = json.loads(raw)
                kind = line.get("type")
                if kind == "header":
                    _check_version(line.get("schema_version"), path)
                    problem = validate_problem(line["problem"])
                    trajectory = Trajectory(problem.id, Mode(line.get("mode", Mode.AGENTIC.value)))
                elif trajectory is None:
                    raise ValueError(f"{path}: record before header")
                elif kind == "event":
                    append_event(trajectory, TrajectoryEvent.from_dict(line))
                elif kind == "summary":
                    trajectory.usage = [UsageRecord.from_dict(u) for u in line.get("usage", ())]
                    trajectory.outcome = Outcome(line["outcome"]) if line.get("outcome") else None
        if trajectory is None:
            raise ValueError(f"{path}: missing header")
        return problem, trajectory

    def load(self, problem_id: str) -> tuple[Problem, Trajectory]:
        path = self.path_for(problem_id)
        if not path.exists():
            raise UnknownProblem(problem_id)
        return self._read(path)

    def __iter__(self) -> Iterator[tuple[Problem, Trajectory]]:
        for path in self.files():
            yield self._read(path)

    def completed(self) -> list[tuple[Problem, Trajectory]]:
        return [(p, t) for p, t in self if t.outcome is not None]


def write_votes(records: Iterable[VoteRecord], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(dumps_line(r.to_dict()) + "\n" for r in records), encoding="utf-8")


def read_votes(path: Union[str, Path]) -> list[VoteRecord]:
    with open(path, encoding="utf-8") as fh:
        return [VoteRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
