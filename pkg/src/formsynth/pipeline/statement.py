"""Statement formalization: normalize, retrieve definitions, sample, filter, select."""

from __future__ import annotations

from typing import Optional, Sequence

from ..core import CallKind, FormalStatement, NormalizedStatement, Phase, Premise, Problem
from ..errors import AllCandidatesFailed, InvalidSelection, InvalidVerdict, NoQueriesParsed, TagMissing
from ..leancheck import CheckMode, annotate_errors
from ..parsing import extract_lean_block, parse_tagged
from ..prompts import render_premises
from ..retrieval import RetrievalOutcome, parse_queries, search_all, select_premises
from .base import Scope, StageResult, attempt_repair, diagnostics_data, source_key


def normalize_statement(scope: Scope, problem: Problem) -> NormalizedStatement:
    """Rewrite the informal input as a proposition; falls back to the raw text."""
    prompt = scope.render("normalize", informal_statement=problem.full_text)
    reply = scope.ask(Phase.NORMALIZATION, "normalize", prompt)
    text, fallback = problem.informal_statement, True
    if reply is not None:
        try:
            parsed = parse_tagged(reply, "normalized")
        except TagMissing:
            parsed = ""
        if parsed:
            text, fallback = parsed, False
    scope.record(Phase.NORMALIZATION, "normalized", text=text, fallback=fallback)
    return NormalizedStatement(text)


def retrieve_premises(scope: Scope, statement_text: str, phase: Phase) -> RetrievalOutcome:
    """Queries, searches and selection for one retrieval round.

    Any failure along the way degrades to fewer (or no) premises; it never
    stops the run.
    """
    target = "definitions" if phase is Phase.DEFINITION_RETRIEVAL else "theorems"
    budgets = scope.budgets
    prompt = scope.render("queries", statement=statement_text, k_query=budgets.k_query,
                          target=target, target_singular=target[:-1])
    reply = scope.ask(phase, "queries", prompt)
    try:
        if reply is None:
            raise NoQueriesParsed("query generation call failed")
        queries = parse_queries(reply, budgets.k_query)
    except NoQueriesParsed as exc:
        scope.record(phase, "queries", queries=[], error=str(exc))
        outcome = RetrievalOutcome()
        scope.record(phase, "premises_selected", statement=statement_text, **outcome.to_dict())
        return outcome
    scope.record(phase, "queries", queries=[q.text for q in queries])

    results = search_all(scope.workflow.index, queries, budgets.top_k, scope.workflow.search_workers)
    for r in results:
        scope.record(phase, "search", **r.to_dict())
    scope._guard()
    outcome = select_premises(
        scope.workflow.gateway, scope.workflow.templates, statement_text, results,
        phase=phase, ledger=scope.ledger,
    ) if any(r.hits for r in results) else RetrievalOutcome(tuple(r.query for r in results))
    scope.record(phase, "premises_selected", statement=statement_text, **outcome.to_dict())
    return outcome


def _fix_statement(scope: Scope, index: int, source: str, report) -> Optional[str]:
    prompt = scope.render("repair", artifact="theorem statement", keep_sorry=True,
                          error_blocks=annotate_errors(source, report.repair_diagnostics()))
    fix = attempt_repair(scope, Phase.STATEMENT_SAMPLING, "statement", source, report,
                         CheckMode.SORRY_OK, prompt, "statement_fix", index=index)
    return fix.fixed_source if fix.ok else None


def formalize_statement(scope: Scope, statement: NormalizedStatement, premises: Sequence[Premise] = ()) -> StageResult:
    """Sample expert formalizations and keep the ones that compile.

    Only when every sample fails does each failed (non-empty) sample get one
    general-model repair. Passing sources are deduplicated and returned in
    ``extra["candidates"]``; no survivor raises :class:`AllCandidatesFailed`.
    """
    k = scope.budgets.k_formalizer
    prompt = scope.render("formalize", normalized_statement=statement.text, premises=render_premises(premises))
    replies = scope.sample(Phase.STATEMENT_SAMPLING, "formalize", prompt, CallKind.EXPERT_FORMALIZER, k)

    passed: list[str] = []
    failed: list[tuple[int, str, object]] = []
    for i, reply in enumerate(replies, start=1):
        if reply is None:
            scope.record(Phase.STATEMENT_SAMPLING, "candidate_checked", index=i, origin="expert",
                         source=None, ok=False, diagnostics=[], error="no completion")
            continue
        source = extract_lean_block(reply)
        report = scope.check(source, CheckMode.SORRY_OK)
        scope.record(Phase.STATEMENT_SAMPLING, "candidate_checked", index=i, origin="expert",
                     source=source, ok=report.ok, diagnostics=diagnostics_data(report.diagnostics))
        if report.ok:
            passed.append(source)
        elif source.strip():
            failed.append((i, source, report))

    attempts = len(replies)
    if not passed:
        for i, source, report in failed:
            fixed = _fix_statement(scope, i, source, report)
            attempts += 1
            if fixed is not None:
                passed.append(fixed)

    unique: dict[str, str] = {}
    for source in passed:
        unique.setdefault(source_key(source), source)
    if not unique:
        scope.record(Phase.STATEMENT_SAMPLING, "stage_failed", reason="all_candidates_failed")
        raise AllCandidatesFailed(f"none of {attempts} formalization attempts compiled")
    candidates = [FormalStatement(s, compiled=True) for s in unique.values()]
    scope.record(Phase.STATEMENT_SAMPLING, "candidates", sources=[c.lean_source for c in candidates])
    return StageResult(Phase.STATEMENT_SAMPLING, True, attempts_used=attempts, extra={"candidates": candidates})


def semantic_check(scope: Scope, problem: Problem, statement: NormalizedStatement, candidate: FormalStatement,
                   premises: Sequence[Premise] = (), index: int = 1) -> tuple[bool, FormalStatement]:
    """Judge one compiled candidate; a compiling correction counts as a pass."""
    prompt = scope.render("semantic_check", informal_statement=problem.full_text,
                          normalized_statement=statement.text, premises=render_premises(premises),
                          formal_statement=candidate.lean_source)
    reply = scope.ask(Phase.SEMANTIC_CHECK, "semantic_check", prompt)
    data: dict = {"index": index, "source": candidate.lean_source}
    verdict = None
    result = candidate
    passed = False
    if reply is None:
        data["error"] = "no completion"
    else:
        try:
            verdict = parse_tagged(reply, "verdict")
        except (TagMissing, InvalidVerdict) as exc:
            data["error"] = str(exc)
    if verdict == "ALIGNED":
        passed = True
    elif verdict == "NOT_ALIGNED":
        try:
            fix = parse_tagged(reply, "fixed_formal_statement")
        except TagMissing:
            fix = ""
        if fix:
            report = scope.check(fix, CheckMode.SORRY_OK)
            data["fix_source"] = fix
            data["fix_ok"] = report.ok
            data["fix_diagnostics"] = diagnostics_data(report.diagnostics)
            if report.ok:
                passed = True
                result = FormalStatement(fix, compiled=True)
    result = FormalStatement(result.lean_source, compiled=True, aligned=passed)
    scope.record(Phase.SEMANTIC_CHECK, "semantic_verdict", **data, verdict=verdict, passed=passed,
                 corrected=passed and verdict == "NOT_ALIGNED", final_source=result.lean_source)
    return passed, result


def filter_aligned(scope: Scope, problem: Problem, statement: NormalizedStatement,
                   candidates: Sequence[FormalStatement], premises: Sequence[Premise] = ()) -> list[FormalStatement]:
    aligned: dict[str, FormalStatement] = {}
    for i, cand in enumerate(candidates, start=1):
        ok, result = semantic_check(scope, problem, statement, cand, premises, index=i)
        if ok:
            aligned.setdefault(source_key(result.lean_source), result)
    if not aligned:
        scope.record(Phase.SEMANTIC_CHECK, "stage_failed", reason="no_aligned_candidate")
    return list(aligned.values())


def select_best(scope: Scope, problem: Problem, statement: NormalizedStatement,
                candidates: Sequence[FormalStatement]) -> FormalStatement:
    """Pick the candidate to prove. One candidate needs no model call."""
    if not candidates:
        raise ValueError("no candidates to select from")
    if len(candidates) == 1:
        scope.record(Phase.SELECTION, "selected", index=1, source=candidates[0].lean_source,
                     fallback=False, model_call=False)
        return candidates[0]
    prompt = scope.render("selection", informal_statement=statement.text,
                          candidates=[c.lean_source for c in candidates])
    reply = scope.ask(Phase.SELECTION, "selection", prompt)
    choice = None
    if reply is not None:
        try:
            choice = int(parse_tagged(reply, "selected"))
        except (TagMissing, InvalidSelection):
            choice = None
    fallback = choice is None or choice > len(candidates)
    index = 1 if fallback else choice
    chosen = candidates[index - 1]
    scope.record(Phase.SELECTION, "selected", index=index, source=chosen.lean_source,
                 fallback=fallback, model_call=True, raw_choice=choice)
    return chosen
