"""Subgoal solving with bounded parallelism and early stop.

Each subgoal runs in its own scope that buffers events and usage; buffers
are merged into the trajectory in index order afterwards, so the stored log
does not depend on thread timing (the set of cancelled subgoals still can,
when more than one worker runs).
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

from ..core import Phase, Premise, ProofArtifact, Subgoal, SubgoalStatus, TrajectoryEvent
from ..gateway import UsageLedger
from ..leancheck import CheckMode
from ..parsing import extract_lean_block
from ..prompts import render_premises
from .base import Cancelled, Scope, diagnostics_data
from .proof import expert_prove, refine_attempt, write_informal_proof

PHASE = Phase.SUBGOAL_SOLVING


def solve_one(scope: Scope, subgoal: Subgoal, premises: Sequence[Premise]) -> Optional[ProofArtifact]:
    """Expert pass@k and refinement, then an informal-proof-guided attempt with up to k_refine repairs."""
    tag = {"subgoal": subgoal.index}
    expert = expert_prove(scope, subgoal.lemma_source, target="subgoal", prove_phase=PHASE, refine_phase=PHASE, **tag)
    if expert.success:
        return expert.artifact

    informal = write_informal_proof(scope, subgoal.lemma_source, premises, phase=PHASE, **tag)
    if informal is None:
        return None
    prompt = scope.render("subgoal_proof", formal_statement=subgoal.lemma_source,
                          informal_proof=informal.text, premises=render_premises(premises))
    reply = scope.ask(PHASE, "subgoal_proof", prompt)
    if reply is None:
        return None
    source = extract_lean_block(reply)
    report = scope.check(source, CheckMode.STRICT)
    scope.record(PHASE, "proof_attempt", target="subgoal", **tag, index=0, origin="general", source=source,
                 ok=report.ok, diagnostics=diagnostics_data(report.diagnostics))
    if report.ok:
        return ProofArtifact(source, True)

    for round_no in range(1, scope.budgets.k_refine + 1):
        if not source.strip():
            break
        fix = refine_attempt(scope, source, report, phase=PHASE, stage="subgoal_refinement", **tag, round=round_no)
        if fix.ok:
            return ProofArtifact(fix.fixed_source, True)
        # the next round repairs the latest attempt when there is one
        if fix.fixed_source and fix.report is not None:
            source, report = fix.fixed_source, fix.report
    return None


@dataclass
class _Slot:
    subgoal: Subgoal
    events: list[TrajectoryEvent] = field(default_factory=list)
    ledger: UsageLedger = field(default_factory=UsageLedger)
    status: SubgoalStatus = SubgoalStatus.PENDING
    proof: Optional[ProofArtifact] = None


def solve_subgoals(scope: Scope, subgoals: Sequence[Subgoal], premises: Sequence[Premise] = ()) -> list[Subgoal]:
    """Solve every subgoal; the first definitive failure cancels the rest.

    Returns the subgoals with terminal statuses, in index order. A subgoal
    that finishes after the cancellation flag went up counts as cancelled.
    """
    if not subgoals:
        raise ValueError("no subgoals to solve")
    cancel = threading.Event()
    lock = threading.Lock()
    slots = [_Slot(sg) for sg in subgoals]

    def work(slot: _Slot) -> None:
        sub = Scope(scope.workflow, slot.events.append, slot.ledger, cancel)
        proof = None
        try:
            proof = solve_one(sub, slot.subgoal, premises)
        except Cancelled:
            pass
        with lock:
            if cancel.is_set():
                slot.status = SubgoalStatus.CANCELLED
            elif proof is not None:
                slot.status, slot.proof = SubgoalStatus.SOLVED, proof
            else:
                slot.status = SubgoalStatus.FAILED
                cancel.set()

    width = scope.budgets.max_parallel_subgoals
    if width == 1:
        for slot in slots:
            work(slot)
    else:
        with ThreadPoolExecutor(max_workers=width) as pool:
            list(pool.map(work, slots))

    done = []
    for slot in slots:
        for event in slot.events:
            scope.emit(event)
        scope.ledger.extend(slot.ledger.records)
        sg = slot.subgoal
        result = Subgoal(sg.index, sg.lemma_source, slot.status, slot.proof, sg.name)
        scope.record(PHASE, "subgoal_result", **result.to_dict())
        done.append(result)

    counts = {s: sum(1 for d in done if d.status is s) for s in SubgoalStatus}
    failed = [d.index for d in done if d.status is SubgoalStatus.FAILED]
    scope.record(PHASE, "subgoals_summary", solved=counts[SubgoalStatus.SOLVED], failed=counts[SubgoalStatus.FAILED],
                 cancelled=counts[SubgoalStatus.CANCELLED], total=len(done))
    if failed:
        scope.record(PHASE, "stage_failed", reason="subgoal_failed", subgoal=failed[0])
    return done
