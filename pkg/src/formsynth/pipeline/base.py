"""Shared machinery for the pipeline stages: budgets, the workflow bundle and scopes.

A :class:`Scope` is what a stage talks to. It wraps model calls and checker
calls so failures turn into data (``None`` replies, failed reports) and
every step lands in the event stream the scope was built with.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Union

from ..core import CallKind, FormalStatement, Phase, ProofArtifact, Sketch, TrajectoryEvent
from ..errors import CheckerTimeout, EmptyCompletion, TransportError
from ..gateway import ChatRequest, ChatResponse, Gateway, UsageLedger
from ..leancheck import CheckMode, CheckReport, Checker, Diagnostic, Severity
from ..parsing import extract_lean_block
from ..prompts import Templates, prompt_hash
from ..retrieval import MockIndex, PremiseIndex


@dataclass(frozen=True)
class Budgets:
    k_query: int = 5
    k_formalizer: int = 4
    k_prover: int = 4
    k_refine: int = 2
    fix_chances_default: int = 1
    top_k: int = 5
    max_parallel_subgoals: int = 1

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"budget {name} must be an integer >= 1, got {value!r}")

    def to_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class StageResult:
    phase: Phase
    success: bool
    artifact: Optional[Union[FormalStatement, ProofArtifact, Sketch]] = None
    attempts_used: int = 0
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass
class Workflow:
    """Everything a run needs besides the problem itself."""

    gateway: Gateway
    checker: Checker
    index: PremiseIndex = field(default_factory=MockIndex.bundled)
    budgets: Budgets = field(default_factory=Budgets)
    templates: Templates = field(default_factory=Templates)
    max_attempts: int = 1  # transport retries per model call
    search_workers: int = 1


class Cancelled(Exception):
    """Raised inside a scope whose cancellation flag has been set."""


def source_key(source: str) -> str:
    """Whitespace-insensitive identity used to deduplicate candidates."""
    return " ".join(source.split())


def diagnostics_data(diags) -> list[dict[str, Any]]:
    return [d.to_dict() for d in diags]


class Scope:
    def __init__(
        self,
        workflow: Workflow,
        emit: Callable[[TrajectoryEvent], None],
        ledger: UsageLedger,
        cancel: Optional[threading.Event] = None,
    ):
        self.workflow = workflow
        self.emit = emit
        self.ledger = ledger
        self.cancel = cancel

    @property
    def budgets(self) -> Budgets:
        return self.workflow.budgets

    def render(self, name: str, **context) -> str:
        return self.workflow.templates.render(name, **context)

    def record(self, phase: Phase, kind: str, **data: Any) -> None:
        self.emit(TrajectoryEvent(phase, kind, data))

    def _guard(self) -> None:
        if self.cancel is not None and self.cancel.is_set():
            raise Cancelled()

    def _request(self, phase: Phase, purpose: str, prompt: str, kind: CallKind) -> ChatRequest:
        return ChatRequest(kind, prompt, max_attempts=self.workflow.max_attempts, phase=phase, purpose=purpose)

    def ask(self, phase: Phase, purpose: str, prompt: str, kind: CallKind = CallKind.GENERAL) -> Optional[str]:
        """One completion, or None when the call failed (usage is still recorded)."""
        self._guard()
        try:
            return self.workflow.gateway.complete(self._request(phase, purpose, prompt, kind), self.ledger).text
        except (TransportError, EmptyCompletion):
            return None

    def sample(self, phase: Phase, purpose: str, prompt: str, kind: CallKind, n: int) -> list[Optional[str]]:
        self._guard()
        results = self.workflow.gateway.sample_n(self._request(phase, purpose, prompt, kind), n, self.ledger)
        return [r.text if isinstance(r, ChatResponse) else None for r in results]

    def check(self, source: str, mode: CheckMode) -> CheckReport:
        """Checker call; timeouts and empty sources become failed reports."""
        self._guard()
        if not source.strip():
            return CheckReport(False, (Diagnostic(Severity.ERROR, 1, 0, 1, 0, "empty source"),))
        try:
            return self.workflow.checker.check(source, mode)
        except CheckerTimeout as exc:
            return CheckReport(False, (Diagnostic(Severity.ERROR, 1, 0, 1, 0, str(exc)),))


@dataclass(frozen=True)
class RepairOutcome:
    fixed_source: Optional[str]
    report: Optional[CheckReport]

    @property
    def ok(self) -> bool:
        return self.report is not None and self.report.ok


def attempt_repair(
    scope: Scope,
    phase: Phase,
    stage: str,
    source: str,
    report: CheckReport,
    mode: CheckMode,
    prompt: str,
    purpose: str,
    **extra: Any,
) -> RepairOutcome:
    """Send one repair prompt, check the reply and log a ``repair`` event."""
    reply = scope.ask(phase, purpose, prompt)
    fixed = extract_lean_block(reply) if reply is not None else None
    fixed_report = scope.check(fixed, mode) if fixed else None
    scope.record(
        phase,
        "repair",
        stage=stage,
        **extra,
        source=source,
        diagnostics=diagnostics_data(report.repair_diagnostics()),
        fixed_source=fixed,
        ok=fixed_report is not None and fixed_report.ok,
        fixed_diagnostics=diagnostics_data(fixed_report.diagnostics) if fixed_report else [],
        mode=mode.value,
        prompt_hash=prompt_hash(prompt),
    )
    return RepairOutcome(fixed, fixed_report)


_THEOREM_NAME = re.compile(r"^\s*(?:theorem|lemma)\s+([^\s:({\[]+)", re.MULTILINE)


def declared_name(source: str) -> str:
    m = _THEOREM_NAME.search(source)
    return m.group(1) if m else ""


__all__ = [
    "Budgets", "Cancelled", "RepairOutcome", "Scope", "StageResult", "Workflow",
    "attempt_repair", "declared_name", "diagnostics_data", "source_key",
]
