"""Domain types shared across the package, plus trajectory bookkeeping.

A :class:`Trajectory` is an append-only log of :class:`TrajectoryEvent`
records. Everything downstream (sample extraction, attribution, replay)
reads the log rather than live pipeline state, so events carry plain
JSON-compatible payloads.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional

from .errors import (
    DuplicateProblem,
    EmptyStatement,
    InvalidField,
    MissingField,
    PhaseOrderViolation,
)


class Source(str, enum.Enum):
    DEEPMATH = "DeepMath"
    DEEPTHEOREM = "DeepTheorem"
    OTHER = "Other"


class PremiseKind(str, enum.Enum):
    DEFINITION = "definition"
    THEOREM = "theorem"


class CallKind(str, enum.Enum):
    GENERAL = "general"
    EXPERT_FORMALIZER = "expert_formalizer"
    EXPERT_PROVER = "expert_prover"

    @property
    def is_expert(self) -> bool:
        return self is not CallKind.GENERAL


class SubgoalStatus(str, enum.Enum):
    PENDING = "pending"
    SOLVED = "solved"
    FAILED = "failed"
    CANCELLED = "cancelled"

    @property
    def terminal(self) -> bool:
        return self is not SubgoalStatus.PENDING


class Outcome(str, enum.Enum):
    VERIFIED = "verified"
    PROOF_FOUND_UNVERIFIED = "proof_found_unverified"
    STATEMENT_ONLY = "statement_only"
    FAILED = "failed"


class Mode(str, enum.Enum):
    AGENTIC = "agentic"
    BASELINE = "baseline"


class Phase(str, enum.Enum):
    NORMALIZATION = "Normalization"
    DEFINITION_RETRIEVAL = "DefinitionRetrieval"
    STATEMENT_SAMPLING = "StatementSampling"
    SEMANTIC_CHECK = "SemanticCheck"
    SELECTION = "Selection"
    EXPERT_PROVING = "ExpertProving"
    REFINEMENT = "Refinement"
    THEOREM_RETRIEVAL = "TheoremRetrieval"
    INFORMAL_PROOF = "InformalProof"
    SKETCHING = "Sketching"
    SUBGOAL_SOLVING = "SubgoalSolving"
    ASSEMBLY = "Assembly"
    VERIFICATION = "Verification"

    @property
    def order(self) -> int:
        return _PHASE_ORDER[self]


_PHASE_ORDER = {phase: i for i, phase in enumerate(Phase)}


def can_follow(last: Optional[Phase], nxt: Phase) -> bool:
    """Whether an event in phase `nxt` may be logged after one in `last`.

    Phases may be skipped (baseline mode skips most of them) and a phase may
    log any number of events, but the log never moves backwards.
    """
    return last is None or nxt.order >= last.order


# -- records -----------------------------------------------------------------


@dataclass(frozen=True)
class Problem:
    id: str
    informal_statement: str
    source: Source = Source.OTHER
    answer: Optional[str] = None
    domain_tags: tuple[str, ...] = ()
    difficulty: Optional[float] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "source": self.source.value,
            "informal_statement": self.informal_statement,
            "answer": self.answer,
            "domain_tags": list(self.domain_tags),
            "difficulty": self.difficulty,
        }

    @property
    def full_text(self) -> str:
        """Statement plus answer, the way judges and the normalizer see it."""
        if self.answer:
            return f"{self.informal_statement}\n\nAnswer: {self.answer}"
        return self.informal_statement


def validate_problem(record: Mapping[str, Any]) -> Problem:
    """Build a :class:`Problem` from one decoded input line."""
    pid = record.get("id")
    if pid is None or (isinstance(pid, str) and not pid.strip()):
        raise MissingField("id")
    if "informal_statement" not in record or record["informal_statement"] is None:
        raise MissingField("informal_statement")
    statement = record["informal_statement"]
    if not isinstance(statement, str):
        raise InvalidField("informal_statement", statement)
    if not statement.strip():
        raise EmptyStatement(str(pid))

    raw_source = record.get("source")
    if raw_source is None:
        source = Source.OTHER
    else:
        lookup = {s.value.lower(): s for s in Source}
        try:
            source = lookup[str(raw_source).lower()]
        except KeyError:
            raise InvalidField("source", raw_source) from None

    difficulty = record.get("difficulty")
    if difficulty is not None:
        if isinstance(difficulty, bool) or not isinstance(difficulty, (int, float)):
            raise InvalidField("difficulty", difficulty)

    tags = record.get("domain_tags") or ()
    if isinstance(tags, str):
        tags = (tags,)

    answer = record.get("answer")
    return Problem(
        id=str(pid),
        informal_statement=statement,
        source=source,
        answer=None if answer is None else str(answer),
        domain_tags=tuple(str(t) for t in tags),
        difficulty=difficulty,
    )


def load_problems(lines: Iterable[str]) -> list[Problem]:
    """Parse JSONL problem records, rejecting duplicate ids."""
    problems: list[Problem] = []
    seen: set[str] = set()
    for line in lines:
        if not line.strip():
            continue
        problem = validate_problem(json.loads(line))
        if problem.id in seen:
            raise DuplicateProblem(problem.id)
        seen.add(problem.id)
        problems.append(problem)
    return problems


@dataclass(frozen=True)
class NormalizedStatement:
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("normalized statement must be non-empty")


@dataclass(frozen=True)
class Premise:
    name: str
    signature: str = ""
    kind: PremiseKind = PremiseKind.THEOREM

    def __post_init__(self):
        if not self.name:
            raise ValueError("premise name must be non-empty")

    def to_dict(self) -> dict[str, str]:
        return {"name": self.name, "signature": self.signature, "kind": self.kind.value}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Premise":
        return cls(d["name"], d.get("signature", ""), PremiseKind(d.get("kind", "theorem")))

    def render(self) -> str:
        return f"{self.name} : {self.signature}" if self.signature else self.name


@dataclass(frozen=True)
class FormalStatement:
    lean_source: str
    compiled: bool = False
    aligned: Optional[bool] = None


@dataclass(frozen=True)
class ProofArtifact:
    lean_source: str
    verified: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {"lean_source": self.lean_source, "verified": self.verified}


@dataclass(frozen=True)
class InformalProof:
    text: str


@dataclass(frozen=True)
class Sketch:
    lean_source: str
    compiled: bool = False
    subgoal_count: int = 0


@dataclass(frozen=True)
class Subgoal:
    index: int
    lemma_source: str
    status: SubgoalStatus = SubgoalStatus.PENDING
    proof: Optional[ProofArtifact] = None
    name: str = ""

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("subgoal index must be >= 0")
        solved = self.status is SubgoalStatus.SOLVED
        if solved != (self.proof is not None and self.proof.verified):
            raise ValueError("status=solved requires a verified proof (and vice versa)")

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "name": self.name,
            "lemma_source": self.lemma_source,
            "status": self.status.value,
            "proof": None if self.proof is None else self.proof.to_dict(),
        }


@dataclass(frozen=True)
class UsageRecord:
    model_id: str
    prompt_tokens: int
    completion_tokens: int
    call_kind: CallKind

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_id": self.model_id,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "call_kind": self.call_kind.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "UsageRecord":
        return cls(d["model_id"], int(d["prompt_tokens"]), int(d["completion_tokens"]), CallKind(d["call_kind"]))


# -- trajectories ------------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryEvent:
    phase: Phase
    kind: str
    data: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"phase": self.phase.value, "kind": self.kind, "data": dict(self.data)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TrajectoryEvent":
        return cls(Phase(d["phase"]), d["kind"], d.get("data", {}))


@dataclass
class Trajectory:
    problem_id: str
    mode: Mode = Mode.AGENTIC
    events: list[TrajectoryEvent] = field(default_factory=list)
    usage: list[UsageRecord] = field(default_factory=list)
    outcome: Optional[Outcome] = None

    @property
    def final_phase(self) -> Optional[Phase]:
        return self.events[-1].phase if self.events else None

    @property
    def complete(self) -> bool:
        return self.outcome is not None

    def record(self, phase: Phase, kind: str, **data: Any) -> TrajectoryEvent:
        event = TrajectoryEvent(phase, kind, data)
        append_event(self, event)
        return event

    def events_of(self, kind: str, phase: Optional[Phase] = None) -> list[TrajectoryEvent]:
        return [e for e in self.events if e.kind == kind and (phase is None or e.phase is phase)]

    def phases(self) -> list[Phase]:
        return [e.phase for e in self.events]

    @property
    def expert_calls(self) -> int:
        return sum(1 for u in self.usage if u.call_kind.is_expert)

    @property
    def general_calls(self) -> int:
        return sum(1 for u in self.usage if not u.call_kind.is_expert)


def append_event(trajectory: Trajectory, event: TrajectoryEvent) -> Trajectory:
    """Append `event`, enforcing workflow order. Returns the same trajectory."""
    if trajectory.outcome is not None:
        raise PhaseOrderViolation(trajectory.final_phase, event.phase)
    last = trajectory.final_phase
    if not can_follow(last, event.phase):
        raise PhaseOrderViolation(last, event.phase)
    trajectory.events.append(event)
    return trajectory


def dumps_line(obj: Mapping[str, Any]) -> str:
    """Serialize one JSONL record with a stable byte representation."""
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))
