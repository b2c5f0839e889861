"""End-to-end runs of one problem, agentic or baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from ..core import (
    CallKind,
    FormalStatement,
    Mode,
    Outcome,
    Phase,
    Problem,
    ProofArtifact,
    SubgoalStatus,
    Trajectory,
    TrajectoryEvent,
    append_event,
)
from ..errors import AllCandidatesFailed, AssemblyFailed, SketchFailed
from ..gateway import UsageLedger
from ..leancheck import CheckMode
from ..parsing import extract_lean_block
from .base import Scope, Workflow, diagnostics_data
from .proof import assemble_proof, expert_prove, extract_subgoals, generate_sketch
from .statement import filter_aligned, formalize_statement, normalize_statement, retrieve_premises, select_best
from .subgoals import solve_subgoals

EventSink = Callable[[TrajectoryEvent], None]


@dataclass
class _Result:
    statement: Optional[FormalStatement] = None
    proof: Optional[ProofArtifact] = None
    via: Optional[str] = None  # expert | refinement | sketch


def _agentic(scope: Scope, problem: Problem) -> _Result:
    normalized = normalize_statement(scope, problem)
    definitions = retrieve_premises(scope, normalized.text, Phase.DEFINITION_RETRIEVAL)
    try:
        candidates = formalize_statement(scope, normalized, definitions.selected).extra["candidates"]
    except AllCandidatesFailed:
        return _Result()
    aligned = filter_aligned(scope, problem, normalized, candidates, definitions.selected)
    if not aligned:
        return _Result()
    chosen = select_best(scope, problem, normalized, aligned)

    direct = expert_prove(scope, chosen.lean_source)
    if direct.success:
        return _Result(chosen, direct.artifact, direct.extra["via"])
    scope.record(Phase.REFINEMENT, "stage_failed", reason="expert_proving_failed")

    theorems = retrieve_premises(scope, chosen.lean_source, Phase.THEOREM_RETRIEVAL)
    premises = theorems.selected
    try:
        sketched = generate_sketch(scope, chosen.lean_source, premises)
        if sketched.extra["complete"]:
            return _Result(chosen, ProofArtifact(sketched.artifact.lean_source, True), "sketch")
        subgoals = extract_subgoals(scope, sketched.artifact)
    except SketchFailed:
        return _Result(chosen)
    solved = solve_subgoals(scope, subgoals, premises)
    if any(s.status is not SubgoalStatus.SOLVED for s in solved):
        return _Result(chosen)
    try:
        assembled = assemble_proof(scope, sketched.artifact, solved)
    except AssemblyFailed:
        return _Result(chosen)
    return _Result(chosen, assembled.artifact, "sketch")


def _baseline(scope: Scope, problem: Problem) -> _Result:
    """Expert formalizer pass@k, first compiling statement, expert prover pass@k. Nothing else."""
    prompt = scope.render("formalize", normalized_statement=problem.full_text, premises="")
    replies = scope.sample(Phase.STATEMENT_SAMPLING, "formalize", prompt, CallKind.EXPERT_FORMALIZER,
                           scope.budgets.k_formalizer)
    chosen = None
    for i, reply in enumerate(replies, start=1):
        if reply is None:
            scope.record(Phase.STATEMENT_SAMPLING, "candidate_checked", index=i, origin="expert",
                         source=None, ok=False, diagnostics=[], error="no completion")
            continue
        source = extract_lean_block(reply)
        report = scope.check(source, CheckMode.SORRY_OK)
        scope.record(Phase.STATEMENT_SAMPLING, "candidate_checked", index=i, origin="expert",
                     source=source, ok=report.ok, diagnostics=diagnostics_data(report.diagnostics))
        if report.ok and chosen is None:
            chosen = (i, FormalStatement(source, compiled=True))
    if chosen is None:
        scope.record(Phase.STATEMENT_SAMPLING, "stage_failed", reason="all_candidates_failed")
        return _Result()
    index, statement = chosen
    scope.record(Phase.SELECTION, "selected", index=index, source=statement.lean_source,
                 fallback=False, model_call=False)
    proved = expert_prove(scope, statement.lean_source, refine=False)
    if proved.success:
        return _Result(statement, proved.artifact, "expert")
    scope.record(Phase.EXPERT_PROVING, "stage_failed", reason="expert_proving_failed")
    return _Result(statement)


def run_problem(workflow: Workflow, problem: Problem, mode: Mode = Mode.AGENTIC,
                sink: Optional[EventSink] = None) -> Trajectory:
    """Run one problem to a terminal outcome.

    `sink`, when given, sees every event right after it is appended, which
    lets a store persist the log incrementally.
    """
    trajectory = Trajectory(problem.id, mode)
    ledger = UsageLedger()

    def emit(event: TrajectoryEvent) -> None:
        append_event(trajectory, event)
        if sink is not None:
            sink(event)

    scope = Scope(workflow, emit, ledger)
    result = (_agentic if mode is Mode.AGENTIC else _baseline)(scope, problem)

    if result.proof is not None:
        report = scope.check(result.proof.lean_source, CheckMode.STRICT)
        scope.record(Phase.VERIFICATION, "verification", source=result.proof.lean_source, ok=report.ok,
                     diagnostics=diagnostics_data(report.diagnostics))
        outcome = Outcome.VERIFIED if report.ok else Outcome.PROOF_FOUND_UNVERIFIED
    elif result.statement is not None:
        outcome = Outcome.STATEMENT_ONLY
    else:
        outcome = Outcome.FAILED

    scope.record(
        trajectory.final_phase or Phase.NORMALIZATION,
        "finished",
        outcome=outcome.value,
        via=result.via,
        statement=result.statement.lean_source if result.statement else None,
        proof=result.proof.lean_source if result.proof else None,
    )
    trajectory.usage = ledger.records
    trajectory.outcome = outcome
    return trajectory
