import pytest
from hypothesis import given
from hypothesis import strategies as st

from formsynth.errors import InvalidSelection, InvalidVerdict, JudgmentMissing, TagMissing
from formsynth.parsing import (
    TaggedOutput,
    extract_lean_block,
    extract_lean_blocks,
    parse_judgment,
    parse_numbered_list,
    parse_tagged,
)


def test_first_tag_pair_wins_and_is_trimmed():
    out = "<normalized>\n  first  \n</normalized> noise <normalized>second</normalized>"
    assert parse_tagged(out, "normalized") == "first"


def test_missing_and_unknown_tags():
    with pytest.raises(TagMissing):
        parse_tagged("no tags here", "verdict")
    with pytest.raises(ValueError):
        parse_tagged("<foo>x</foo>", "foo")


@pytest.mark.parametrize("text, expected", [("ALIGNED", "ALIGNED"), (" NOT_ALIGNED ", "NOT_ALIGNED")])
def test_verdict_values(text, expected):
    assert parse_tagged(f"<verdict>{text}</verdict>", "verdict") == expected


def test_verdict_rejects_other_words():
    with pytest.raises(InvalidVerdict):
        parse_tagged("<verdict>aligned</verdict>", "verdict")


def test_selected_must_be_a_positive_integer():
    assert parse_tagged("<selected> 02 </selected>", "selected") == "2"
    for bad in ("0", "two", "-1"):
        with pytest.raises(InvalidSelection):
            parse_tagged(f"<selected>{bad}</selected>", "selected")


def test_fixed_statement_loses_its_fence():
    out = "<fixed_formal_statement>\n```lean4\ntheorem t : 1 = 1 := by\n  sorry\n```\n</fixed_formal_statement>"
    assert parse_tagged(out, "fixed_formal_statement") == "theorem t : 1 = 1 := by\n  sorry"


def test_tagged_output_collects_what_parses():
    parsed = TaggedOutput.parse("<analysis>ok</analysis><verdict>maybe</verdict>")
    assert parsed.extracted == {"analysis": "ok"}


def test_lean_block_extraction_uses_the_last_fence():
    out = "```lean\nfirst\n```\ntext\n```lean4\nsecond\n```"
    assert extract_lean_blocks(out) == ["first", "second"]
    assert extract_lean_block(out) == "second"
    assert extract_lean_block("  bare text \n") == "bare text"


def test_numbered_list_accepts_numbers_bullets_and_quotes():
    out = "Here:\n1. `Nat.add_comm`\n2) \"mul comm\"\n- third item\nnot an item"
    assert parse_numbered_list(out) == ["Nat.add_comm", "mul comm", "third item"]


@pytest.mark.parametrize("text, vote", [
    ("analysis...\nFinal Judgment: Correct", 1),
    ("analysis...\nFinal Judgment: Incorrect", 0),
    ("maybe Final Judgment: Correct? On reflection:\nFinal Judgment: Incorrect", 0),
    ("Final Judgment: Incorrect at first, but\nFinal Judgment: **Correct**", 1),
])
def test_last_final_judgment_wins(text, vote):
    assert parse_judgment(text) == vote


@pytest.mark.parametrize("text", ["Correct", "Final Judgment: unsure", "Final Judgment: Correct\nFinal Judgment:"])
def test_missing_judgment(text):
    with pytest.raises(JudgmentMissing):
        parse_judgment(text)


@given(st.lists(st.sampled_from(["Correct", "Incorrect"]), min_size=1, max_size=5), st.text(alphabet="abc .\n"))
def test_judgment_matches_a_string_scan(verdicts, filler):
    text = filler.join(f"Final Judgment: {v}" for v in verdicts)
    assert parse_judgment(text) == (1 if verdicts[-1] == "Correct" else 0)
