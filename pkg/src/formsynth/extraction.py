"""Decoupled sample extraction.

Every extractor reads only the event log of a finished trajectory, so a
store can be mined again at any time and yields the same bytes. Local
successes inside globally failed runs (an aligned statement, a solved
subgoal, a verified repair, a compiling sketch) are harvested too.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

from .core import Outcome, Phase, Premise, Trajectory, TrajectoryEvent, dumps_line
from .leancheck import Diagnostic

DATASETS = ("statements", "proofs", "premises", "corrections", "sketches")

# repair stages whose output is a proof checked at the Strict bar
PROOF_REPAIR_STAGES = frozenset({"main_refinement", "subgoal_refinement", "assembly"})


def _premises(items: Iterable[Any]) -> list[dict[str, Any]]:
    return [p.to_dict() for p in items]


@dataclass(frozen=True)
class StatementSample:
    S_N: str
    P: tuple[Premise, ...]
    S_F: str
    trajectory_outcome: Outcome

    def to_dict(self) -> dict[str, Any]:
        return {"S_N": self.S_N, "P": _premises(self.P), "S_F": self.S_F,
                "trajectory_outcome": self.trajectory_outcome.value}


@dataclass(frozen=True)
class ProofSample:
    S_F: str
    P: tuple[Premise, ...]
    R_F: str
    origin: str  # main_theorem | subgoal

    def to_dict(self) -> dict[str, Any]:
        return {"S_F": self.S_F, "P": _premises(self.P), "R_F": self.R_F, "origin": self.origin}


@dataclass(frozen=True)
class PremiseSample:
    statement: str
    Q: tuple[str, ...]
    positives: tuple[Premise, ...]
    hard_negatives: tuple[Premise, ...]

    def __post_init__(self):
        if {p.name for p in self.positives} & {p.name for p in self.hard_negatives}:
            raise ValueError("positives and hard negatives overlap")

    def to_dict(self) -> dict[str, Any]:
        return {"statement": self.statement, "Q": list(self.Q), "positives": _premises(self.positives),
                "hard_negatives": _premises(self.hard_negatives)}


@dataclass(frozen=True)
class CorrectionSample:
    R_F: str
    E: tuple[Diagnostic, ...]
    R_F_fixed: str

    def to_dict(self) -> dict[str, Any]:
        return {"R_F": self.R_F, "E": [d.to_dict() for d in self.E], "R_F_fixed": self.R_F_fixed}


@dataclass(frozen=True)
class SketchSample:
    S_F: str
    P: tuple[Premise, ...]
    R_N: str
    R_S: str
    verified_closed: bool

    def to_dict(self) -> dict[str, Any]:
        return {"S_F": self.S_F, "P": _premises(self.P), "R_N": self.R_N, "R_S": self.R_S,
                "verified_closed": self.verified_closed}


Sample = Union[StatementSample, ProofSample, PremiseSample, CorrectionSample, SketchSample]


# -- log readers ---------------------------------------------------------------


def trajectory_outcome(trajectory: Trajectory) -> Outcome:
    if trajectory.outcome is not None:
        return trajectory.outcome
    finished = _finished(trajectory)
    return Outcome(finished["outcome"]) if finished else Outcome.FAILED


def _finished(trajectory: Trajectory) -> Optional[dict[str, Any]]:
    events = trajectory.events_of("finished")
    return dict(events[-1].data) if events else None


def _retrieved(trajectory: Trajectory, phase: Phase) -> Optional[tuple[Premise, ...]]:
    events = trajectory.events_of("premises_selected", phase)
    if not events:
        return None
    return tuple(Premise.from_dict(p) for p in events[-1].data.get("selected", ()))


def definition_premises(trajectory: Trajectory) -> tuple[Premise, ...]:
    return _retrieved(trajectory, Phase.DEFINITION_RETRIEVAL) or ()


def theorem_premises(trajectory: Trajectory) -> tuple[Premise, ...]:
    """Premises for proof-side samples: theorem retrieval when it ran, else the definitions."""
    found = _retrieved(trajectory, Phase.THEOREM_RETRIEVAL)
    return found if found is not None else definition_premises(trajectory)


def _normalized(trajectory: Trajectory) -> Optional[str]:
    events = trajectory.events_of("normalized")
    return events[-1].data["text"] if events else None


def _selected_statement(trajectory: Trajectory) -> Optional[str]:
    finished = _finished(trajectory)
    if finished and finished.get("statement"):
        return finished["statement"]
    events = trajectory.events_of("selected")
    return events[-1].data["source"] if events else None


def _is_ok_proof_repair(event: TrajectoryEvent) -> bool:
    d = event.data
    return event.kind == "repair" and d.get("stage") in PROOF_REPAIR_STAGES and bool(d.get("ok")) \
        and bool(d.get("fixed_source"))


def verified_sources(trajectory: Trajectory) -> list[str]:
    """Every source in the log that passed its final check."""
    out: list[str] = []
    for e in trajectory.events:
        d = e.data
        if e.kind == "semantic_verdict" and d.get("passed"):
            out.append(d["final_source"])
        elif e.kind in ("proof_attempt", "assembly_attempt", "verification") and d.get("ok") and d.get("source"):
            out.append(d["source"])
        elif _is_ok_proof_repair(e):
            out.append(d["fixed_source"])
        elif e.kind == "subgoal_result" and d.get("status") == "solved":
            out.append(d["proof"]["lean_source"])
    return out


def mentions(name: str, source: str) -> bool:
    """Whole-token occurrence of `name` in Lean source."""
    return re.search(rf"(?<![\w.']){re.escape(name)}(?![\w'])", source) is not None


def premise_used(premise: Premise, sources: Sequence[str]) -> bool:
    short = premise.name.rsplit(".", 1)[-1]
    names = {premise.name, short} if short else {premise.name}
    return any(mentions(n, s) for s in sources for n in names)


# -- extractors ----------------------------------------------------------------


def extract_statement_samples(trajectory: Trajectory) -> list[StatementSample]:
    normalized = _normalized(trajectory)
    if normalized is None:
        return []
    premises = definition_premises(trajectory)
    outcome = trajectory_outcome(trajectory)
    return [StatementSample(normalized, premises, e.data["final_source"], outcome)
            for e in trajectory.events_of("semantic_verdict") if e.data.get("passed")]


def extract_proof_samples(trajectory: Trajectory) -> list[ProofSample]:
    out: list[ProofSample] = []
    finished = _finished(trajectory)
    if trajectory_outcome(trajectory) is Outcome.VERIFIED and finished and finished.get("proof"):
        out.append(ProofSample(finished["statement"], theorem_premises(trajectory), finished["proof"], "main_theorem"))
    root = theorem_premises(trajectory)
    for e in trajectory.events_of("subgoal_result"):
        if e.data.get("status") == "solved":
            out.append(ProofSample(e.data["lemma_source"], root, e.data["proof"]["lean_source"], "subgoal"))
    return out


def extract_premise_samples(trajectory: Trajectory) -> list[PremiseSample]:
    sources = verified_sources(trajectory)
    if not sources:
        return []
    out: list[PremiseSample] = []
    for e in trajectory.events_of("premises_selected"):
        selected = [Premise.from_dict(p) for p in e.data.get("selected", ())]
        unselected = [Premise.from_dict(p) for p in e.data.get("unselected", ())]
        positives = [p for p in selected if premise_used(p, sources)]
        if not positives:
            continue
        unused = [p for p in selected if p not in positives]
        out.append(PremiseSample(e.data.get("statement", ""), tuple(e.data.get("queries", ())),
                                 tuple(positives), tuple(unselected + unused)))
    return out


def extract_correction_samples(trajectory: Trajectory) -> list[CorrectionSample]:
    return [
        CorrectionSample(e.data["source"], tuple(Diagnostic.from_dict(d) for d in e.data.get("diagnostics", ())),
                         e.data["fixed_source"])
        for e in trajectory.events if _is_ok_proof_repair(e)
    ]


def extract_sketch_samples(trajectory: Trajectory) -> list[SketchSample]:
    statement = _selected_statement(trajectory)
    finished = _finished(trajectory) or {}
    closed = trajectory_outcome(trajectory) is Outcome.VERIFIED and finished.get("via") == "sketch"
    premises = theorem_premises(trajectory)
    return [SketchSample(statement or "", premises, e.data.get("informal_proof", ""), e.data["source"], closed)
            for e in trajectory.events_of("sketch")]


EXTRACTORS = {
    "statements": extract_statement_samples,
    "proofs": extract_proof_samples,
    "premises": extract_premise_samples,
    "corrections": extract_correction_samples,
    "sketches": extract_sketch_samples,
}


def extract_all(trajectory: Trajectory) -> dict[str, list[Sample]]:
    return {name: fn(trajectory) for name, fn in EXTRACTORS.items()}


def success_only(trajectories: Iterable[Trajectory]) -> list[Trajectory]:
    """The conventional filter: keep only runs that ended verified."""
    return [t for t in trajectories if trajectory_outcome(t) is Outcome.VERIFIED]


def export_datasets(trajectories: Iterable[Trajectory], out_dir: Union[str, Path], *,
                    successful_only: bool = False) -> dict[str, dict[str, int]]:
    """Write the five dataset files plus ``manifest.json``; return the manifest.

    Manifest counts are split by whether the source trajectory ended verified.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = list(trajectories)
    if successful_only:
        runs = success_only(runs)
    manifest = {name: {"from_successful": 0, "from_failed": 0} for name in DATASETS}
    lines: dict[str, list[str]] = {name: [] for name in DATASETS}
    for t in runs:
        bucket = "from_successful" if trajectory_outcome(t) is Outcome.VERIFIED else "from_failed"
        for name, samples in extract_all(t).items():
            manifest[name][bucket] += len(samples)
            lines[name].extend(dumps_line(s.to_dict()) for s in samples)
    for name in DATASETS:
        body = "".join(line + "\n" for line in lines[name])
        (out / f"{name}.jsonl").write_text(body, encoding="utf-8")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
