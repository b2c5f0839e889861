import itertools
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from formsynth.core import CallKind, Problem, Source
from formsynth.errors import EmptyPanel, EmptyVotes, NoProblems, TransportError
from formsynth.gateway import FunctionBackend, Gateway
from formsynth.prompts import Templates
from formsynth.verification import (
    DEFAULT_PANEL,
    AggregationRule,
    PanelMember,
    VerifierPanel,
    VoteRecord,
    agreement_matrix,
    aggregate,
    effective_verifiers,
    judge,
    record_decision,
    verified_rate,
    verify_statement,
)

RULES = list(AggregationRule)


def oracle(votes, rule):
    """Plain counting, written independently of the implementation."""
    yes = votes.count(1)
    if rule is AggregationRule.STRICT:
        return 1 if yes == len(votes) else 0
    if rule is AggregationRule.LENIENT:
        return 1 if yes > 0 else 0
    return 1 if 2 * yes >= len(votes) else 0


def test_aggregate_matches_oracle_on_every_vector_up_to_seven():
    checked = 0
    for n in range(1, 8):
        for votes in itertools.product((0, 1), repeat=n):
            for rule in RULES:
                assert aggregate(list(votes), rule) == oracle(list(votes), rule), (votes, rule)
            checked += 1
    assert checked == 254


def test_majority_ties_count_as_verified():
    assert aggregate([1, 0]) == 1
    assert aggregate([1, 0, 0]) == 0
    with pytest.raises(EmptyVotes):
        aggregate([])


@given(st.lists(st.integers(0, 1), min_size=1, max_size=12))
def test_rules_are_ordered(votes):
    strict, majority, lenient = (aggregate(votes, r) for r in
                                 (AggregationRule.STRICT, AggregationRule.MAJORITY, AggregationRule.LENIENT))
    assert strict <= majority <= lenient


@pytest.mark.parametrize("generator, exclude, size", [
    ("deepseek-v3.2", True, 5),
    ("gpt", True, 6),
    ("claude", True, 6),
    ("qwen", True, 6),
    ("some-other-model", True, 7),
    ("deepseek-v3.2", False, 7),
])
def test_effective_verifier_set_sizes(generator, exclude, size):
    assert len(effective_verifiers(DEFAULT_PANEL, generator, exclude)) == size


def test_panel_validation():
    with pytest.raises(EmptyPanel):
        VerifierPanel(())
    with pytest.raises(ValueError):
        VerifierPanel((PanelMember("a", "x"), PanelMember("a", "y")))
    solo = VerifierPanel.from_mapping({"a": "x"})
    with pytest.raises(EmptyPanel):
        effective_verifiers(solo, "x")
    assert solo.identity_of("unlisted") == "unlisted"


def test_verified_rate_divides_by_every_problem():
    records = [VoteRecord("p1", "g", {"a": 1, "b": 1}), VoteRecord("p2", "g", {"a": 0, "b": 0})]
    assert verified_rate(records, 10) == Fraction(1, 10)
    assert verified_rate([], 3) == 0
    with pytest.raises(NoProblems):
        verified_rate(records, 0)
    with pytest.raises(ValueError):
        verified_rate(records, 1)


def test_vote_record_round_trip_and_validation():
    r = VoteRecord("p", "gpt", {"a": 1, "b": 0})
    assert VoteRecord.from_dict(r.to_dict()) == r
    with pytest.raises(ValueError):
        VoteRecord("p", "gpt", {"a": 2})
    with pytest.raises(ValueError):
        VoteRecord("p", "gpt", {"a": True})


def test_agreement_on_hand_counted_votes():
    records = [VoteRecord(f"p{i}", "g", {"a": a, "b": b}) for i, (a, b) in enumerate([(1, 0), (1, 1), (0, 0)])]
    m = agreement_matrix(records)
    assert m["a", "b"] == m["b", "a"] == pytest.approx(2 / 3)
    assert m["a", "a"] == m["b", "b"] == 1.0
    assert m.shared["a", "b"] == 3


def test_agreement_only_counts_shared_problems():
    records = [VoteRecord("p1", "g", {"a": 1, "b": 1}), VoteRecord("p2", "g", {"a": 0, "c": 1})]
    m = agreement_matrix(records, judges=["a", "b", "c", "d"])
    assert m["a", "b"] == 1.0 and m.shared["a", "b"] == 1
    assert m["a", "c"] == 0.0
    assert m["b", "c"] is None
    assert m["d", "d"] is None
    assert m.to_dict()["judges"] == ["a", "b", "c", "d"]


@given(st.lists(st.dictionaries(st.sampled_from("abcde"), st.integers(0, 1), min_size=1), max_size=15))
def test_agreement_matrix_is_symmetric_with_unit_diagonal(vote_maps):
    records = [VoteRecord(f"p{i}", "g", v) for i, v in enumerate(vote_maps)]
    m = agreement_matrix(records)
    for a in m.judges:
        assert m[a, a] == 1.0
        for b in m.judges:
            assert m[a, b] == m[b, a]
            if m[a, b] is not None:
                assert 0.0 <= m[a, b] <= 1.0


PROBLEM = Problem("p", "Show that 1 = 1.", Source.OTHER)


def panel_gateway(replies):
    def reply_for(model_id):
        def fn(request):
            value = replies[model_id]
            if isinstance(value, Exception):
                raise value
            return value
        return fn

    named = {m: FunctionBackend(m, reply_for(m)) for m in replies}
    return Gateway({CallKind.GENERAL: named[next(iter(named))]}, named)


def test_judge_reads_verdicts_and_treats_failures_as_rejections():
    gw = panel_gateway({"ok": "Fine.\nFinal Judgment: Correct", "no": "Final Judgment: Incorrect",
                        "mute": "I refuse.", "down": TransportError("offline")})
    votes = {m: judge(gw, Templates(), PROBLEM, "theorem t : 1 = 1 := by sorry", m).vote for m in gw.named}
    assert votes == {"ok": 1, "no": 0, "mute": 0, "down": 0}
    assert judge(gw, Templates(), PROBLEM, "theorem t : 1 = 1", "down").error


@pytest.mark.parametrize("workers", [1, 4])
def test_verify_statement_skips_same_identity_judges(workers):
    panel = VerifierPanel((PanelMember("j1", "x"), PanelMember("j2", "y"), PanelMember("j3", "y")))
    gw = panel_gateway({"j1": "Final Judgment: Correct", "j2": "Final Judgment: Correct",
                        "j3": "Final Judgment: Incorrect"})
    record, judgments = verify_statement(gw, Templates(), panel, PROBLEM, "theorem t : 1 = 1 := by sorry", "y",
                                         max_workers=workers)
    assert record.votes == {"j1": 1}
    assert [j.model_id for j in judgments] == ["j1"]
    everyone, _ = verify_statement(gw, Templates(), panel, PROBLEM, "theorem t : 1 = 1 := by sorry", "y",
                                   exclude=False, max_workers=workers)
    assert everyone.votes == {"j1": 1, "j2": 1, "j3": 0}
    assert record_decision(everyone) == 1
    assert record_decision(everyone, AggregationRule.STRICT) == 0
