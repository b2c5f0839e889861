import json

import pytest

from formsynth.core import (
    CallKind,
    Mode,
    Outcome,
    Phase,
    Premise,
    PremiseKind,
    ProofArtifact,
    Source,
    Subgoal,
    SubgoalStatus,
    Trajectory,
    TrajectoryEvent,
    UsageRecord,
    can_follow,
    dumps_line,
    load_problems,
    validate_problem,
)
from formsynth.errors import DuplicateProblem, EmptyStatement, InvalidField, MissingField, PhaseOrderViolation


def test_validate_problem_defaults():
    p = validate_problem({"id": 7, "informal_statement": "Show 1 = 1."})
    assert p.id == "7"
    assert p.source is Source.OTHER
    assert p.domain_tags == ()
    assert p.full_text == "Show 1 = 1."


def test_source_is_case_insensitive_and_answer_joins_full_text():
    p = validate_problem({"id": "a", "informal_statement": "Find x.", "source": "deepmath", "answer": 3,
                          "domain_tags": "Algebra", "difficulty": 4.5})
    assert p.source is Source.DEEPMATH
    assert p.domain_tags == ("Algebra",)
    assert p.full_text == "Find x.\n\nAnswer: 3"


@pytest.mark.parametrize("record, error", [
    ({"informal_statement": "x"}, MissingField),
    ({"id": "  ", "informal_statement": "x"}, MissingField),
    ({"id": "a"}, MissingField),
    ({"id": "a", "informal_statement": "   "}, EmptyStatement),
    ({"id": "a", "informal_statement": 5}, InvalidField),
    ({"id": "a", "informal_statement": "x", "source": "Putnam"}, InvalidField),
    ({"id": "a", "informal_statement": "x", "difficulty": "hard"}, InvalidField),
    ({"id": "a", "informal_statement": "x", "difficulty": True}, InvalidField),
])
def test_validate_problem_rejects(record, error):
    with pytest.raises(error):
        validate_problem(record)


def test_load_problems_skips_blank_lines_and_rejects_duplicates():
    lines = [json.dumps({"id": "a", "informal_statement": "x"}), "", json.dumps({"id": "b", "informal_statement": "y"})]
    assert [p.id for p in load_problems(lines)] == ["a", "b"]
    with pytest.raises(DuplicateProblem):
        load_problems(lines + [lines[0]])


def test_phase_order_allows_skips_and_repeats_but_not_going_back():
    assert can_follow(None, Phase.VERIFICATION)
    assert can_follow(Phase.SELECTION, Phase.SELECTION)
    assert can_follow(Phase.NORMALIZATION, Phase.SUBGOAL_SOLVING)
    assert not can_follow(Phase.SKETCHING, Phase.REFINEMENT)


def test_trajectory_rejects_backwards_events_and_events_after_outcome():
    t = Trajectory("p")
    t.record(Phase.NORMALIZATION, "normalized", text="x")
    t.record(Phase.SELECTION, "selected", index=1)
    with pytest.raises(PhaseOrderViolation):
        t.record(Phase.STATEMENT_SAMPLING, "candidates")
    t.outcome = Outcome.STATEMENT_ONLY
    with pytest.raises(PhaseOrderViolation):
        t.record(Phase.VERIFICATION, "verification")
    assert t.final_phase is Phase.SELECTION
    assert [e.kind for e in t.events_of("selected")] == ["selected"]


def test_call_counts_follow_call_kind():
    t = Trajectory("p", Mode.BASELINE)
    t.usage = [UsageRecord("m", 1, 1, CallKind.EXPERT_PROVER), UsageRecord("m", 1, 1, CallKind.EXPERT_FORMALIZER),
               UsageRecord("g", 1, 1, CallKind.GENERAL)]
    assert (t.expert_calls, t.general_calls) == (2, 1)


def test_subgoal_status_requires_verified_proof():
    Subgoal(0, "lemma", SubgoalStatus.SOLVED, ProofArtifact("p", True))
    with pytest.raises(ValueError):
        Subgoal(0, "lemma", SubgoalStatus.SOLVED, None)
    with pytest.raises(ValueError):
        Subgoal(0, "lemma", SubgoalStatus.FAILED, ProofArtifact("p", True))
    with pytest.raises(ValueError):
        Subgoal(-1, "lemma")


def test_records_round_trip():
    premise = Premise("Nat.add_comm", "∀ n m, n + m = m + n", PremiseKind.THEOREM)
    assert Premise.from_dict(premise.to_dict()) == premise
    usage = UsageRecord("m", 3, 4, CallKind.GENERAL)
    assert UsageRecord.from_dict(usage.to_dict()) == usage
    event = TrajectoryEvent(Phase.ASSEMBLY, "assembly_attempt", {"ok": True})
    assert TrajectoryEvent.from_dict(event.to_dict()) == event
    with pytest.raises(ValueError):
        UsageRecord("m", -1, 0, CallKind.GENERAL)


def test_dumps_line_is_compact_and_keeps_unicode():
    assert dumps_line({"a": "ℕ", "b": [1, 2]}) == '{"a":"ℕ","b":[1,2]}'
