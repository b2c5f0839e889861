"""Run metrics, metadata bucketing and per-trajectory outcome attribution."""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

from .core import CallKind, Outcome, Phase, Problem, Source, Trajectory
from .errors import MissingDifficulty, NoProblems, UnknownSource
from .extraction import trajectory_outcome
from .gateway import DEFAULT_PRICES, PriceEntry, accrue_cost, format_money
from .verification import AggregationRule, VoteRecord, record_decision, verified_rate


class DifficultyTier(str, enum.Enum):
    EASY = "Easy"
    NORMAL = "Normal"
    HARD = "Hard"


class MacroDomain(str, enum.Enum):
    ALGEBRA = "Algebra"
    GEOMETRY = "Geometry"
    ANALYSIS = "Analysis"
    DISCRETE_MATHEMATICS = "DiscreteMathematics"
    NUMBER_THEORY = "NumberTheory"
    APPLIED_MATHEMATICS = "AppliedMathematics"
    OTHER = "Other"


class SuccessReason(str, enum.Enum):
    EXPERT_PROVER = "ExpertProver"
    ITERATIVE_REFINEMENT = "IterativeRefinement"
    SUBGOAL_DECOMPOSITION = "SubgoalDecomposition"


class FailurePhase(str, enum.Enum):
    STATEMENT_FORMALIZATION = "StatementFormalization"
    EXPERT_PROVING = "ExpertProving"
    PROOF_SKETCHING = "ProofSketching"
    SUBGOAL_SOLVING = "SubgoalSolving"
    ASSEMBLY = "Assembly"
    SEMANTIC_VERIFICATION = "SemanticVerification"


# (easy ceiling inclusive, hard floor exclusive)
TIER_THRESHOLDS = {Source.DEEPTHEOREM: (6, 8), Source.DEEPMATH: (4, 7)}


def difficulty_tier(source: Union[Source, str], value: Optional[float]) -> DifficultyTier:
    try:
        source = Source(source)
    except ValueError:
        raise UnknownSource(str(source)) from None
    if source not in TIER_THRESHOLDS:
        raise UnknownSource(source.value)
    if value is None:
        raise MissingDifficulty(f"no difficulty value for {source.value}")
    easy, hard = TIER_THRESHOLDS[source]
    if value <= easy:
        return DifficultyTier.EASY
    if value > hard:
        return DifficultyTier.HARD
    return DifficultyTier.NORMAL


@lru_cache(maxsize=1)
def default_domain_table() -> dict[str, MacroDomain]:
    raw = json.loads(resources.files("formsynth").joinpath("data/domains.json").read_text(encoding="utf-8"))
    return {k.lower(): MacroDomain(v) for k, v in raw.items()}


def load_domain_table(path: Union[str, Path]) -> dict[str, MacroDomain]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return {k.strip().lower(): MacroDomain(v) for k, v in raw.items()}


def domain_bucket(tags: Sequence[str], table: Optional[Mapping[str, MacroDomain]] = None) -> MacroDomain:
    """Macro domain of the first (primary) tag.

    Hierarchical tags such as ``Algebra -> Prealgebra`` fall back to their
    segments, outermost first, when the whole tag is not in the table.
    """
    if not tags:
        return MacroDomain.OTHER
    table = default_domain_table() if table is None else table
    primary = tags[0].strip().lower()
    if primary in table:
        return table[primary]
    for segment in primary.split("->"):
        segment = segment.strip()
        if segment in table:
            return table[segment]
    return MacroDomain.OTHER


# -- attribution -----------------------------------------------------------------

_VIA = {
    "expert": SuccessReason.EXPERT_PROVER,
    "refinement": SuccessReason.ITERATIVE_REFINEMENT,
    "sketch": SuccessReason.SUBGOAL_DECOMPOSITION,
}

_FAILED_IN = {
    Phase.NORMALIZATION: FailurePhase.STATEMENT_FORMALIZATION,
    Phase.DEFINITION_RETRIEVAL: FailurePhase.STATEMENT_FORMALIZATION,
    Phase.STATEMENT_SAMPLING: FailurePhase.STATEMENT_FORMALIZATION,
    Phase.SEMANTIC_CHECK: FailurePhase.STATEMENT_FORMALIZATION,
    Phase.SELECTION: FailurePhase.STATEMENT_FORMALIZATION,
    Phase.EXPERT_PROVING: FailurePhase.EXPERT_PROVING,
    Phase.REFINEMENT: FailurePhase.EXPERT_PROVING,
    Phase.THEOREM_RETRIEVAL: FailurePhase.PROOF_SKETCHING,
    Phase.INFORMAL_PROOF: FailurePhase.PROOF_SKETCHING,
    Phase.SKETCHING: FailurePhase.PROOF_SKETCHING,
    Phase.SUBGOAL_SOLVING: FailurePhase.SUBGOAL_SOLVING,
    Phase.ASSEMBLY: FailurePhase.ASSEMBLY,
    Phase.VERIFICATION: FailurePhase.ASSEMBLY,
}


@dataclass(frozen=True)
class OutcomeAttribution:
    success_reason: Optional[SuccessReason] = None
    failure_phase: Optional[FailurePhase] = None

    def __post_init__(self):
        if (self.success_reason is None) == (self.failure_phase is None):
            raise ValueError("exactly one of success_reason and failure_phase must be set")

    @property
    def label(self) -> str:
        return (self.success_reason or self.failure_phase).value


def attribute_outcome(trajectory: Trajectory, majority_verified: Optional[bool] = None) -> OutcomeAttribution:
    """Credit a verified run to the route that produced its proof, or blame a failed
    run on the deepest phase that logged a failure.

    `majority_verified=False` marks a proof the judges rejected.
    """
    finished = trajectory.events_of("finished")
    via = finished[-1].data.get("via") if finished else None
    if trajectory_outcome(trajectory) is Outcome.VERIFIED:
        if majority_verified is False:
            return OutcomeAttribution(failure_phase=FailurePhase.SEMANTIC_VERIFICATION)
        return OutcomeAttribution(success_reason=_VIA.get(via, SuccessReason.EXPERT_PROVER))
    failures = trajectory.events_of("stage_failed")
    if failures:
        return OutcomeAttribution(failure_phase=_FAILED_IN[failures[-1].phase])
    if via == "sketch":
        return OutcomeAttribution(failure_phase=FailurePhase.ASSEMBLY)
    if via is not None:
        return OutcomeAttribution(failure_phase=FailurePhase.EXPERT_PROVING)
    return OutcomeAttribution(failure_phase=FailurePhase.STATEMENT_FORMALIZATION)


# -- metrics ---------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    N: int
    M: int  # problems with a verified proof, the ones sent to judges
    FR: Fraction
    PR: Fraction
    VR: Optional[Fraction]
    strict_VR: Optional[Fraction]
    lenient_VR: Optional[Fraction]
    expert_calls: int
    general_calls: int
    total_cost: Decimal
    avg_cost_per_verified: Optional[Decimal]

    def to_dict(self) -> dict[str, Any]:
        def pct(x: Optional[Fraction]) -> Optional[float]:
            return None if x is None else round(float(x) * 100, 2)

        return {
            "N": self.N, "M": self.M,
            "FR": pct(self.FR), "PR": pct(self.PR), "VR": pct(self.VR),
            "strict_VR": pct(self.strict_VR), "lenient_VR": pct(self.lenient_VR),
            "expert_calls": self.expert_calls, "general_calls": self.general_calls,
            "total_cost": format_money(self.total_cost),
            "avg_cost_per_verified": None if self.avg_cost_per_verified is None
            else format_money(self.avg_cost_per_verified, 3),
        }


def compute_metrics(trajectories: Iterable[Trajectory], vote_records: Optional[Iterable[VoteRecord]] = None,
                    prices: Union[Iterable[PriceEntry], Mapping[str, PriceEntry]] = DEFAULT_PRICES, *,
                    total_problems: Optional[int] = None) -> Metrics:
    """FR, PR and VR over N problems, expert-call totals and general-model cost.

    Only general-model usage is priced; expert models are self-hosted.
    Without vote records VR is None and the cost is spread over proved runs.
    """
    runs = list(trajectories)
    n = len(runs) if total_problems is None else total_problems
    if n <= 0:
        raise NoProblems("metrics over zero problems")
    outcomes = [trajectory_outcome(t) for t in runs]
    formalized = sum(1 for o in outcomes if o is not Outcome.FAILED)
    proved = sum(1 for o in outcomes if o is Outcome.VERIFIED)

    usage = [u for t in runs for u in t.usage]
    general = [u for u in usage if u.call_kind is CallKind.GENERAL]
    total_cost = accrue_cost(general, prices)

    if vote_records is None:
        vr = strict = lenient = None
        verified = proved
    else:
        records = list(vote_records)
        vr = verified_rate(records, n, AggregationRule.MAJORITY)
        strict = verified_rate(records, n, AggregationRule.STRICT)
        lenient = verified_rate(records, n, AggregationRule.LENIENT)
        verified = sum(record_decision(r) for r in records)
    return Metrics(
        N=n, M=proved, FR=Fraction(formalized, n), PR=Fraction(proved, n),
        VR=vr, strict_VR=strict, lenient_VR=lenient,
        expert_calls=len(usage) - len(general), general_calls=len(general),
        total_cost=total_cost,
        avg_cost_per_verified=total_cost / verified if verified else None,
    )


# -- report ------------------------------------------------------------------------

UNRATED = "Unrated"


@dataclass(frozen=True)
class ProblemBucket:
    problem_id: str
    domain: MacroDomain
    tier: Optional[DifficultyTier]
    verified: bool


def bucket_problem(problem: Problem, verified: bool,
                   table: Optional[Mapping[str, MacroDomain]] = None) -> ProblemBucket:
    try:
        tier = difficulty_tier(problem.source, problem.difficulty)
    except (UnknownSource, MissingDifficulty):
        tier = None
    return ProblemBucket(problem.id, domain_bucket(problem.domain_tags, table), tier, verified)


def _count_table(labels: Iterable[str], order: Sequence[str]) -> list[list[Any]]:
    counts = {k: 0 for k in order}
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    return [[k, v] for k, v in counts.items()]


def build_tables(metrics: Metrics, attributions: Sequence[OutcomeAttribution],
                 buckets: Sequence[ProblemBucket]) -> dict[str, dict[str, Any]]:
    domains = []
    for d in MacroDomain:
        members = [b for b in buckets if b.domain is d]
        hit = sum(1 for b in members if b.verified)
        domains.append([d.value, len(members), hit, round(100 * hit / len(members), 2) if members else None])
    tiers = [t.value for t in DifficultyTier] + [UNRATED]
    tier_rows = _count_table(((b.tier.value if b.tier else UNRATED) for b in buckets if b.verified), tiers)
    success = _count_table((a.success_reason.value for a in attributions if a.success_reason),
                           [s.value for s in SuccessReason])
    failure = _count_table((a.failure_phase.value for a in attributions if a.failure_phase),
                           [f.value for f in FailurePhase])
    return {
        "domains": {"columns": ["domain", "problems", "verified", "VR"], "rows": domains},
        "tiers": {"columns": ["tier", "verified"], "rows": tier_rows},
        "success": {"columns": ["reason", "count"], "rows": success},
        "failure": {"columns": ["phase", "count"], "rows": failure},
    }


def _fixed_width(title: str, columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    cells = [list(map(str, columns))] + [["-" if v is None else str(v) for v in r] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = [title, "  ".join(c.ljust(w) for c, w in zip(cells[0], widths)).rstrip(),
             "  ".join("-" * w for w in widths)]
    for row in cells[1:]:
        lines.append("  ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(row, widths))))
    return "\n".join(lines)


def render_text(metrics: Metrics, tables: Mapping[str, Mapping[str, Any]]) -> str:
    m = metrics.to_dict()
    head = [["N", m["N"]], ["FR %", m["FR"]], ["PR %", m["PR"]], ["VR % (majority)", m["VR"]],
            ["VR % (strict)", m["strict_VR"]], ["VR % (lenient)", m["lenient_VR"]],
            ["expert calls", m["expert_calls"]], ["general calls", m["general_calls"]],
            ["total cost", m["total_cost"]], ["cost / verified", m["avg_cost_per_verified"]]]
    parts = [_fixed_width("metrics", ["metric", "value"], head)]
    for name, title in (("domains", "verified rate by domain"), ("tiers", "verified problems by difficulty"),
                        ("success", "successful runs by route"), ("failure", "failed runs by phase")):
        parts.append(_fixed_width(title, tables[name]["columns"], tables[name]["rows"]))
    return "\n\n".join(parts) + "\n"


def emit_report(metrics: Metrics, attributions: Sequence[OutcomeAttribution], buckets: Sequence[ProblemBucket],
                out_path: Union[str, Path]) -> dict[str, Any]:
    """Write ``report.json``, ``report.txt`` and one CSV per table under `out_path`."""
    out = Path(out_path)
    out.mkdir(parents=True, exist_ok=True)
    tables = build_tables(metrics, attributions, buckets)
    report = {"metrics": metrics.to_dict(), "tables": tables}
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    (out / "report.txt").write_text(render_text(metrics, tables), encoding="utf-8")
    for name, table in tables.items():
        with open(out / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(table["columns"])
            writer.writerows(table["rows"])
    return report
