"""Proof generation stages: expert sampling, stateless refinement, sketching, assembly."""

from __future__ import annotations

from typing import Any, Optional, Sequence

from ..core import CallKind, InformalProof, Phase, Premise, ProofArtifact, Sketch, Subgoal, SubgoalStatus
from ..errors import AssemblyFailed, NoSubgoalsExtracted, SketchFailed
from ..leancheck import CheckMode, CheckReport, Diagnostic, annotate_errors
from ..parsing import extract_lean_block, extract_lean_blocks
from ..prompts import Templates, render_premises
from .base import RepairOutcome, Scope, StageResult, attempt_repair, declared_name, diagnostics_data, source_key


def refine_prompt(templates: Templates, source: str, diagnostics: Sequence[Diagnostic]) -> str:
    """The repair prompt for a failed proof. Depends on nothing but its arguments."""
    return templates.render("refine", error_blocks=annotate_errors(source, diagnostics))


def refine_attempt(scope: Scope, source: str, report: CheckReport, *, phase: Phase = Phase.REFINEMENT,
                   stage: str = "main_refinement", **extra: Any) -> RepairOutcome:
    prompt = refine_prompt(scope.workflow.templates, source, report.repair_diagnostics())
    return attempt_repair(scope, phase, stage, source, report, CheckMode.STRICT, prompt, "refine", **extra)


def refine_proof(scope: Scope, source: str, report: CheckReport, *, phase: Phase = Phase.REFINEMENT,
                 stage: str = "main_refinement", **extra: Any) -> Optional[ProofArtifact]:
    """One stateless repair round; the verified fix, or None."""
    fix = refine_attempt(scope, source, report, phase=phase, stage=stage, **extra)
    return ProofArtifact(fix.fixed_source, verified=True) if fix.ok else None


def expert_prove(scope: Scope, formal_statement: str, *, target: str = "main",
                 prove_phase: Phase = Phase.EXPERT_PROVING, refine_phase: Phase = Phase.REFINEMENT,
                 refine: bool = True, **extra: Any) -> StageResult:
    """pass@k from the expert prover, then refinement of each distinct failure.

    All k samples are drawn (and billed) up front; they are checked in order
    and the first verified one wins. When none verifies, distinct failed
    sources are refined one at a time until a fix verifies.
    ``extra["via"]`` tells which route produced the proof.
    """
    k = scope.budgets.k_prover
    prompt = scope.render("prove", formal_statement=formal_statement)
    replies = scope.sample(prove_phase, "prove", prompt, CallKind.EXPERT_PROVER, k)
    failures: dict[str, tuple[str, CheckReport]] = {}
    for i, reply in enumerate(replies, start=1):
        if reply is None:
            scope.record(prove_phase, "proof_attempt", target=target, **extra, index=i, source=None,
                         ok=False, diagnostics=[], error="no completion")
            continue
        source = extract_lean_block(reply)
        report = scope.check(source, CheckMode.STRICT)
        scope.record(prove_phase, "proof_attempt", target=target, **extra, index=i, source=source,
                     ok=report.ok, diagnostics=diagnostics_data(report.diagnostics))
        if report.ok:
            return StageResult(prove_phase, True, ProofArtifact(source, True), i, {"via": "expert"})
        if source.strip():
            failures.setdefault(source_key(source), (source, report))

    attempts = len(replies)
    if refine:
        stage = "main_refinement" if target == "main" else "subgoal_refinement"
        for source, report in failures.values():
            attempts += 1
            fixed = refine_proof(scope, source, report, phase=refine_phase, stage=stage, **extra)
            if fixed is not None:
                return StageResult(refine_phase, True, fixed, attempts, {"via": "refinement"})
    return StageResult(refine_phase if refine else prove_phase, False, attempts_used=attempts)


def write_informal_proof(scope: Scope, formal_statement: str, premises: Sequence[Premise], *,
                         phase: Phase = Phase.INFORMAL_PROOF, **extra: Any) -> Optional[InformalProof]:
    prompt = scope.render("informal_proof", formal_statement=formal_statement, premises=render_premises(premises))
    reply = scope.ask(phase, "informal_proof", prompt)
    if reply is None:
        return None
    scope.record(phase, "informal_proof", **extra, text=reply.strip())
    return InformalProof(reply.strip())


def generate_sketch(scope: Scope, formal_statement: str, premises: Sequence[Premise] = ()) -> StageResult:
    """Informal proof, then a `have ... := by sorry` skeleton checked with sorries allowed.

    A failed skeleton gets one repair. Raises :class:`SketchFailed` when no
    compiling skeleton comes out. ``extra`` carries the informal proof and
    whether the skeleton already closes the goal without any `sorry`.
    """
    informal = write_informal_proof(scope, formal_statement, premises)
    if informal is None:
        scope.record(Phase.INFORMAL_PROOF, "stage_failed", reason="informal_proof_failed")
        raise SketchFailed("informal proof generation failed")

    prompt = scope.render("sketch", formal_statement=formal_statement, informal_proof=informal.text,
                          premises=render_premises(premises))
    reply = scope.ask(Phase.SKETCHING, "sketch", prompt)
    source = extract_lean_block(reply) if reply is not None else ""
    report = scope.check(source, CheckMode.SORRY_OK)
    scope.record(Phase.SKETCHING, "sketch_attempt", source=source or None, ok=report.ok,
                 diagnostics=diagnostics_data(report.diagnostics))
    attempts = 1
    if not report.ok and source.strip():
        fix_prompt = scope.render("repair", artifact="proof sketch", keep_sorry=True,
                                  error_blocks=annotate_errors(source, report.repair_diagnostics()))
        fix = attempt_repair(scope, Phase.SKETCHING, "sketch", source, report, CheckMode.SORRY_OK,
                             fix_prompt, "sketch_fix")
        attempts = 2
        if fix.ok:
            source, report = fix.fixed_source, fix.report
    if not report.ok:
        scope.record(Phase.SKETCHING, "stage_failed", reason="sketch_failed")
        raise SketchFailed("no compiling proof sketch")

    complete = not report.uses_sorry
    scope.record(Phase.SKETCHING, "sketch", source=source, attempts_used=attempts,
                 informal_proof=informal.text, complete=complete)
    return StageResult(Phase.SKETCHING, True, Sketch(source, compiled=True), attempts,
                       {"informal_proof": informal, "complete": complete})


def extract_subgoals(scope: Scope, sketch: Sketch) -> list[Subgoal]:
    """Lift every `have` of the sketch into a standalone lemma.

    One model call returns one lean block per lemma. Lemmas that do not
    compile on their own (sorry allowed) are dropped. Indices are
    consecutive in source order.
    """
    prompt = scope.render("subgoal_extraction", sketch=sketch.lean_source)
    reply = scope.ask(Phase.SKETCHING, "subgoal_extraction", prompt)
    blocks = [b for b in extract_lean_blocks(reply) if b.strip()] if reply is not None else []
    subgoals: list[Subgoal] = []
    dropped = []
    for block in blocks:
        report = scope.check(block, CheckMode.SORRY_OK)
        if report.ok:
            subgoals.append(Subgoal(len(subgoals), block, name=declared_name(block)))
        else:
            dropped.append({"source": block, "diagnostics": diagnostics_data(report.diagnostics)})
    scope.record(Phase.SKETCHING, "subgoals_extracted",
                 subgoals=[{"index": s.index, "name": s.name, "lemma_source": s.lemma_source} for s in subgoals],
                 dropped=dropped)
    if not subgoals:
        scope.record(Phase.SKETCHING, "stage_failed", reason="no_subgoals")
        raise NoSubgoalsExtracted("no standalone lemma compiled")
    return subgoals


def assemble_proof(scope: Scope, sketch: Sketch, solved: Sequence[Subgoal]) -> StageResult:
    """Merge sub-proofs into the sketch; one stateless repair on failure."""
    if any(s.status is not SubgoalStatus.SOLVED for s in solved):
        raise ValueError("assembly needs every subgoal solved")
    prompt = scope.render("assembly", sketch=sketch.lean_source, subproofs=[s.proof.lean_source for s in solved])
    reply = scope.ask(Phase.ASSEMBLY, "assembly", prompt)
    source = extract_lean_block(reply) if reply is not None else ""
    report = scope.check(source, CheckMode.STRICT)
    scope.record(Phase.ASSEMBLY, "assembly_attempt", source=source or None, ok=report.ok,
                 diagnostics=diagnostics_data(report.diagnostics))
    if report.ok:
        return StageResult(Phase.ASSEMBLY, True, ProofArtifact(source, True), 1)
    if source.strip():
        fixed = refine_proof(scope, source, report, phase=Phase.ASSEMBLY, stage="assembly")
        if fixed is not None:
            return StageResult(Phase.ASSEMBLY, True, fixed, 2)
    scope.record(Phase.ASSEMBLY, "stage_failed", reason="assembly_failed")
    raise AssemblyFailed("assembled proof does not verify")
