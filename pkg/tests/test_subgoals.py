import threading
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from formsynth import scenarios
from formsynth.core import CallKind, Subgoal, SubgoalStatus
from formsynth.errors import TransportError
from formsynth.gateway import Completion, Gateway, UsageLedger
from formsynth.leancheck import MockChecker
from formsynth.pipeline import Budgets, Scope, Workflow, solve_subgoals
from formsynth.retrieval import MockIndex


def solve(n, fail_at, budgets=Budgets(), workflow=None):
    events = []
    scope_workflow = workflow or scenarios.early_stop(n, fail_at, budgets).workflow(budgets)
    scope = Scope(scope_workflow, events.append, UsageLedger())
    subgoals = [Subgoal(i, scenarios.early_stop_lemma(i)) for i in range(n)]
    return solve_subgoals(scope, subgoals), events, scope


def counts(done):
    return tuple(sum(1 for s in done if s.status is status)
                 for status in (SubgoalStatus.SOLVED, SubgoalStatus.FAILED, SubgoalStatus.CANCELLED))


def test_serial_early_stop_after_the_third_subgoal_fails():
    done, events, _ = solve(10, 2)
    assert counts(done) == (2, 1, 7)
    assert [s.status for s in done[:3]] == [SubgoalStatus.SOLVED, SubgoalStatus.SOLVED, SubgoalStatus.FAILED]
    summary = [e for e in events if e.kind == "subgoals_summary"][0].data
    assert summary == {"solved": 2, "failed": 1, "cancelled": 7, "total": 10}
    assert [e.data for e in events if e.kind == "stage_failed"] == [{"reason": "subgoal_failed", "subgoal": 2}]


def test_cancelled_subgoals_make_no_calls():
    done, events, scope = solve(10, 2)
    attempted = {e.data["subgoal"] for e in events if e.kind == "proof_attempt"}
    assert attempted == {0, 1, 2}
    assert all(s.proof is None for s in done if s.status is not SubgoalStatus.SOLVED)


def test_all_solved_without_failure():
    done, events, _ = solve(4, None)
    assert counts(done) == (4, 0, 0)
    assert not [e for e in events if e.kind == "stage_failed"]
    assert all(s.proof.verified for s in done)


def test_empty_subgoal_list_is_rejected():
    with pytest.raises(ValueError):
        solve_subgoals(Scope(scenarios.World().workflow(), lambda e: None, UsageLedger()), [])


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_outcomes_conserve_the_subgoal_count(data):
    n = data.draw(st.integers(1, 10))
    fail_at = data.draw(st.one_of(st.none(), st.integers(0, n - 1)))
    width = data.draw(st.integers(1, 3))
    done, _, _ = solve(n, fail_at, Budgets(max_parallel_subgoals=width))
    solved, failed, cancelled = counts(done)
    assert solved + failed + cancelled == n
    assert [s.index for s in done] == list(range(n))
    if fail_at is None:
        assert (solved, failed, cancelled) == (n, 0, 0)
    else:
        assert failed <= 1 if width == 1 else failed >= 1
        if width == 1:
            assert (solved, failed, cancelled) == (fail_at, 1, n - fail_at - 1)


class GatedProver:
    """Expert prover that holds subgoal 0 until subgoal 1 has failed."""

    model_id = "gated"
    temperature = 0.7

    def __init__(self):
        self.failed = threading.Event()

    def generate(self, request, temperature):
        if "es_h0_" in request.prompt:
            self.failed.wait(timeout=5)
            time.sleep(0.2)  # let subgoal 1 record its failure first
            body = "omega"
        else:
            body = "bogus_a"
        lemma = scenarios.early_stop_lemma(0 if "es_h0_" in request.prompt else 1)
        return Completion(scenarios.lean(lemma.replace("sorry", body)), 1, 1)


class FailingGeneral:
    model_id = "general"
    temperature = 0.7

    def __init__(self, prover):
        self.prover = prover
        self.calls = 0

    def generate(self, request, temperature):
        # refine then informal proof; after the second, subgoal 1 has nothing left to try
        self.calls += 1
        if self.calls == 2:
            self.prover.failed.set()
        raise TransportError("down")


def test_parallel_subgoal_finishing_after_cancel_counts_as_cancelled():
    prover = GatedProver()
    gw = Gateway({CallKind.EXPERT_PROVER: prover, CallKind.GENERAL: FailingGeneral(prover)})
    budgets = Budgets(max_parallel_subgoals=2, k_prover=1)
    workflow = Workflow(gw, MockChecker(scenarios.CHECK_RULES), MockIndex([]), budgets)
    done, events, _ = solve(2, None, budgets, workflow)
    assert [s.status for s in done] == [SubgoalStatus.CANCELLED, SubgoalStatus.FAILED]
    # subgoal 0 got its reply after the cancel and stopped before checking it
    assert [e.data["subgoal"] for e in events if e.kind == "proof_attempt"] == [1]
    assert [e.data["index"] for e in events if e.kind == "subgoal_result"] == [0, 1]
