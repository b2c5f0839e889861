import pytest

from formsynth import scenarios
from formsynth.core import CallKind, Mode, Outcome, Phase, Problem, Source
from formsynth.gateway import ScriptExhausted
from formsynth.leancheck import CheckMode, annotated_snippets, strip_markers
from formsynth.pipeline import Budgets, refine_prompt, run_problem
from formsynth.prompts import Templates, prompt_hash
from formsynth.reporting import FailurePhase, SuccessReason, attribute_outcome
from formsynth.scenarios import P, World, lean

from .conftest import run_world

ZETA_STATEMENT = "theorem zeta_mul_comm (a b : ℕ) : a * b = b * a := by\n  sorry"
ZETA_FIXED = "theorem zeta_mul_comm' (a b : ℕ) : a * b = b * a := by\n  sorry"


def zeta(fix_compiles: bool) -> World:
    """Every expert formalization fails to compile, so each gets a general-model repair."""
    tag = "zeta"
    w = World([Problem("zeta", "Show that multiplication of naturals commutes. (zeta)", Source.OTHER)])
    w.reply(P.NORMALIZATION, "normalize", tag, "<normalized>For all naturals a b, a * b = b * a. (zeta)</normalized>")
    w.reply(P.DEFINITION_RETRIEVAL, "queries", tag, "Nothing to search.")
    w.reply(P.STATEMENT_SAMPLING, "formalize", tag, lean(ZETA_STATEMENT.replace("sorry", "bogus_stmt")), times=4)
    if fix_compiles:
        w.reply(P.STATEMENT_SAMPLING, "statement_fix", tag, lean(ZETA_STATEMENT))
        w.reply(P.STATEMENT_SAMPLING, "statement_fix", tag, lean("bogus"), times=3)
        w.reply(P.SEMANTIC_CHECK, "semantic_check", tag,
                "<verdict>NOT_ALIGNED</verdict>\n<fixed_formal_statement>\n"
                f"{lean(ZETA_FIXED)}\n</fixed_formal_statement>")
        w.reply(P.EXPERT_PROVING, "prove", tag, lean(ZETA_FIXED.replace("sorry", "exact Nat.mul_comm a b")), times=4)
    else:
        w.reply(P.STATEMENT_SAMPLING, "statement_fix", tag, lean("bogus"), times=4)
    return w


def general_calls(t):
    return sum(1 for u in t.usage if u.call_kind is CallKind.GENERAL)


def expert_calls(t):
    return sum(1 for u in t.usage if u.call_kind.is_expert)


def test_golden_outcomes_routes_and_attributions(golden_runs):
    expected = {
        "alpha": (Outcome.VERIFIED, "expert", SuccessReason.EXPERT_PROVER),
        "beta": (Outcome.VERIFIED, "sketch", SuccessReason.SUBGOAL_DECOMPOSITION),
        "gamma": (Outcome.STATEMENT_ONLY, None, FailurePhase.PROOF_SKETCHING),
    }
    for pid, (outcome, via, label) in expected.items():
        t = golden_runs[pid]
        assert t.outcome is outcome
        assert t.events[-1].kind == "finished"
        assert t.events[-1].data["via"] == via
        attribution = attribute_outcome(t)
        assert label in (attribution.success_reason, attribution.failure_phase)


def test_every_run_ends_in_exactly_one_finished_event(golden_runs, delta_run):
    for t in [*golden_runs.values(), delta_run]:
        assert [e.kind for e in t.events].count("finished") == 1
        finished = t.events[-1].data
        assert finished["outcome"] == t.outcome.value
        assert set(finished) >= {"outcome", "via", "statement", "proof"}


def test_golden_call_counts(golden_runs):
    alpha, beta = golden_runs["alpha"], golden_runs["beta"]
    assert (expert_calls(alpha), general_calls(alpha)) == (8, 6)
    assert (expert_calls(beta), general_calls(beta)) == (16, 15)


def test_failed_expert_samples_are_counted():
    run = run_world(scenarios.alpha(transport_failure=True))["alpha"]
    assert run.outcome is Outcome.VERIFIED
    assert expert_calls(run) == 8
    assert sum(1 for u in run.usage if u.prompt_tokens == 0 and u.completion_tokens == 0) == 1


def test_baseline_is_expert_only():
    run = run_world(scenarios.epsilon(), Mode.BASELINE)["epsilon"]
    assert run.outcome is Outcome.VERIFIED
    assert (expert_calls(run), general_calls(run)) == (8, 0)
    selected = run.events_of("selected")[0].data
    assert selected["index"] == 2 and selected["model_call"] is False
    assert run.events_of("finished")[0].data["via"] == "expert"
    assert not run.events_of("repair")


def test_statement_repair_and_semantic_correction_path():
    run = run_world(zeta(True))["zeta"]
    repairs = run.events_of("repair")
    assert [r.data["stage"] for r in repairs] == ["statement"] * 4
    assert [r.data["ok"] for r in repairs] == [True, False, False, False]
    verdict = run.events_of("semantic_verdict")[0].data
    assert verdict["verdict"] == "NOT_ALIGNED" and verdict["corrected"] is True
    finished = run.events[-1].data
    assert finished["statement"] == ZETA_FIXED
    assert run.outcome is Outcome.VERIFIED
    # one candidate survives, so selection makes no model call
    assert run.events_of("selected")[0].data["model_call"] is False


def test_no_compiling_statement_fails_in_statement_formalization():
    run = run_world(zeta(False))["zeta"]
    assert run.outcome is Outcome.FAILED
    assert run.events_of("stage_failed")[-1].data["reason"] == "all_candidates_failed"
    assert attribute_outcome(run).failure_phase is FailurePhase.STATEMENT_FORMALIZATION
    assert general_calls(run) == 6
    assert expert_calls(run) == 4


def test_statement_only_runs_keep_their_statement(golden_runs):
    gamma = golden_runs["gamma"]
    assert gamma.events[-1].data["statement"] == scenarios.GAMMA_STATEMENT
    assert gamma.events[-1].data["proof"] is None


def test_phases_never_go_backwards(golden_runs, delta_run):
    order = list(Phase)
    for t in [*golden_runs.values(), delta_run]:
        indices = [order.index(e.phase) for e in t.events]
        assert indices == sorted(indices)


def test_refine_prompt_is_a_pure_function_of_source_and_errors(golden_runs):
    beta = golden_runs["beta"]
    repair = beta.events_of("repair")[0]
    # the same repair logged in an independent run has the same prompt
    again = run_world(scenarios.beta())["beta"].events_of("repair")[0]
    assert repair.data["prompt_hash"] == again.data["prompt_hash"]

    workflow = scenarios.beta().workflow()
    source = repair.data["source"]
    report = workflow.checker.check(source, CheckMode.STRICT)
    first = refine_prompt(Templates(), source, report.repair_diagnostics())
    second = refine_prompt(Templates(), source, report.repair_diagnostics())
    assert first == second
    assert prompt_hash(first) == repair.data["prompt_hash"]
    snippets = annotated_snippets(first)
    assert snippets and all("<error>" in s for s in snippets)
    assert all(strip_markers(s) == source for s in snippets)


def test_exhausted_script_surfaces_as_an_error():
    world = World([Problem("eta", "Nothing is scripted. (eta)", Source.OTHER)])
    with pytest.raises(ScriptExhausted):
        run_problem(world.workflow(), world.problems[0])


def test_sink_sees_every_event_in_order(golden_runs):
    world = scenarios.alpha()
    seen = []
    run = run_problem(world.workflow(), world.problems[0], sink=seen.append)
    assert seen == run.events
    assert [e.to_dict() for e in seen] == [e.to_dict() for e in golden_runs["alpha"].events]


def test_budgets_reject_non_positive_values():
    with pytest.raises(ValueError):
        Budgets(k_prover=0)
