"""Ensemble semantic verification of proved statements.

A panel of judge models votes 0/1 on whether a formal statement means what
the original problem says. Judges sharing the generator's identity sit out
(unless exclusion is disabled, as for baseline runs), votes are aggregated
per problem, and the verified rate divides by the full problem count.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Optional, Sequence

from .core import CallKind, Phase, Problem
from .errors import EmptyCompletion, EmptyPanel, EmptyVotes, JudgmentMissing, NoProblems, TransportError
from .gateway import ChatRequest, Gateway
from .parsing import parse_judgment
from .prompts import Templates

log = logging.getLogger(__name__)


class AggregationRule(str, enum.Enum):
    MAJORITY = "Majority"
    STRICT = "Strict"
    LENIENT = "Lenient"


@dataclass(frozen=True)
class PanelMember:
    model_id: str
    identity: str


@dataclass(frozen=True)
class VerifierPanel:
    members: tuple[PanelMember, ...]

    def __post_init__(self):
        if not self.members:
            raise EmptyPanel("a verifier panel needs at least one member")
        ids = [m.model_id for m in self.members]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate model id in panel")

    @property
    def size(self) -> int:
        return len(self.members)

    def identity_of(self, model_id: str) -> str:
        for m in self.members:
            if m.model_id == model_id:
                return m.identity
        return model_id

    @classmethod
    def from_mapping(cls, identities: Mapping[str, str]) -> "VerifierPanel":
        return cls(tuple(PanelMember(mid, ident) for mid, ident in identities.items()))


# the two DeepSeek endpoints are one model with and without thinking
DEFAULT_PANEL = VerifierPanel((
    PanelMember("gpt-5.2", "gpt"),
    PanelMember("claude-sonnet-4-5", "claude"),
    PanelMember("gemini-3-pro-preview", "gemini-3-pro"),
    PanelMember("gemini-3-flash-preview", "gemini-3-flash"),
    PanelMember("deepseek-chat", "deepseek-v3.2"),
    PanelMember("deepseek-reasoner", "deepseek-v3.2"),
    PanelMember("qwen-max", "qwen"),
))


@dataclass(frozen=True)
class VoteRecord:
    problem_id: str
    generator_identity: str
    votes: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        bad = {k: v for k, v in self.votes.items() if v not in (0, 1) or isinstance(v, bool)}
        if bad:
            raise ValueError(f"votes must be 0 or 1: {bad}")

    def to_dict(self) -> dict[str, Any]:
        return {"problem_id": self.problem_id, "generator_identity": self.generator_identity,
                "votes": dict(self.votes)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "VoteRecord":
        return cls(str(d["problem_id"]), str(d["generator_identity"]), {str(k): int(v) for k, v in d["votes"].items()})


def effective_verifiers(panel: VerifierPanel, generator_identity: str, exclude: bool = True) -> list[str]:
    """Model ids allowed to judge output from `generator_identity`."""
    eligible = [m.model_id for m in panel.members if not (exclude and m.identity == generator_identity)]
    if not eligible:
        raise EmptyPanel(f"every panel member shares the identity {generator_identity!r}")
    return eligible


def aggregate(votes: Sequence[int], rule: AggregationRule = AggregationRule.MAJORITY) -> int:
    if not votes:
        raise EmptyVotes("cannot aggregate zero votes")
    total, n = sum(votes), len(votes)
    if rule is AggregationRule.MAJORITY:
        return int(total >= math.ceil(n / 2))
    if rule is AggregationRule.STRICT:
        return int(total == n)
    return int(total >= 1)


def record_decision(record: VoteRecord, rule: AggregationRule = AggregationRule.MAJORITY) -> int:
    return aggregate(list(record.votes.values()), rule)


def verified_rate(records: Iterable[VoteRecord], total_problems: int,
                  rule: AggregationRule = AggregationRule.MAJORITY) -> Fraction:
    """Verified problems over all `total_problems`, not over the proved ones."""
    if total_problems <= 0:
        raise NoProblems("verified rate over zero problems")
    records = list(records)
    if len(records) > total_problems:
        raise ValueError("more vote records than problems")
    return Fraction(sum(record_decision(r, rule) for r in records), total_problems)


@dataclass(frozen=True)
class AgreementMatrix:
    judges: tuple[str, ...]
    values: Mapping[tuple[str, str], Optional[float]]
    shared: Mapping[tuple[str, str], int]

    def __getitem__(self, pair: tuple[str, str]) -> Optional[float]:
        return self.values[pair]

    def rows(self) -> list[list[Optional[float]]]:
        return [[self.values[(a, b)] for b in self.judges] for a in self.judges]

    def to_dict(self) -> dict[str, Any]:
        return {"judges": list(self.judges), "matrix": self.rows()}


def agreement_matrix(records: Iterable[VoteRecord], judges: Optional[Sequence[str]] = None) -> AgreementMatrix:
    """Pairwise identical-vote rates over the problems where both judges voted.

    Pairs that never shared a problem map to None. A judge's agreement with
    itself is 1.0 whenever it voted at all.
    """
    records = list(records)
    if judges is None:
        seen: dict[str, None] = {}
        for r in records:
            for j in r.votes:
                seen.setdefault(j, None)
        judges = list(seen)
    values: dict[tuple[str, str], Optional[float]] = {}
    shared: dict[tuple[str, str], int] = {}
    for a in judges:
        for b in judges:
            both = [r for r in records if a in r.votes and b in r.votes]
            same = sum(1 for r in both if r.votes[a] == r.votes[b])
            shared[(a, b)] = len(both)
            values[(a, b)] = same / len(both) if both else None
    return AgreementMatrix(tuple(judges), values, shared)


# -- calling judges --------------------------------------------------------------


@dataclass(frozen=True)
class Judgment:
    model_id: str
    vote: int
    raw: Optional[str]
    error: Optional[str] = None


def judge(gateway: Gateway, templates: Templates, problem: Problem, formal_statement: str,
          model_id: str) -> Judgment:
    """One verdict from one panel model. Anything unparseable is a 0."""
    prompt = templates.render("verification", informal_statement=problem.full_text,
                              formal_statement=formal_statement)
    request = ChatRequest(CallKind.GENERAL, prompt, phase=Phase.VERIFICATION, purpose="judge", model_id=model_id)
    try:
        text = gateway.complete(request).text
    except (TransportError, EmptyCompletion) as exc:
        log.warning("judge %s failed on %s: %s", model_id, problem.id, exc)
        return Judgment(model_id, 0, None, str(exc))
    try:
        return Judgment(model_id, parse_judgment(text), text)
    except JudgmentMissing as exc:
        log.warning("judge %s gave no verdict on %s", model_id, problem.id)
        return Judgment(model_id, 0, text, str(exc))


def verify_statement(gateway: Gateway, templates: Templates, panel: VerifierPanel, problem: Problem,
                     formal_statement: str, generator_identity: str, *, exclude: bool = True,
                     max_workers: int = 1) -> tuple[VoteRecord, list[Judgment]]:
    eligible = effective_verifiers(panel, generator_identity, exclude)

    def ask(model_id: str) -> Judgment:
        return judge(gateway, templates, problem, formal_statement, model_id)

    if max_workers <= 1:
        judgments = [ask(m) for m in eligible]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            judgments = list(pool.map(ask, eligible))
    record = VoteRecord(problem.id, generator_identity, {j.model_id: j.vote for j in judgments})
    return record, judgments
