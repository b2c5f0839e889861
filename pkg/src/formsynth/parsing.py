"""Parsers for model output contracts: XML-ish tags, lean fences, numbered lists."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import InvalidSelection, InvalidVerdict, JudgmentMissing, TagMissing

KNOWN_TAGS = frozenset({"normalized", "verdict", "fixed_formal_statement", "selected", "analysis"})
VERDICTS = ("ALIGNED", "NOT_ALIGNED")

_FENCE = re.compile(r"```[ \t]*(lean4|lean)[ \t]*\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class TaggedOutput:
    raw: str
    extracted: dict[str, str] = field(default_factory=dict)

    @classmethod
    def parse(cls, raw: str, tags=KNOWN_TAGS) -> "TaggedOutput":
        found = {}
        for tag in tags:
            try:
                found[tag] = parse_tagged(raw, tag)
            except (TagMissing, InvalidVerdict, InvalidSelection):
                pass
        return cls(raw, found)


def _inner(output: str, tag: str) -> str:
    m = re.search(rf"<{re.escape(tag)}>(.*?)</{re.escape(tag)}>", output, re.DOTALL)
    if m is None:
        raise TagMissing(tag)
    return m.group(1).strip()


def parse_tagged(output: str, tag: str) -> str:
    """Inner text of the first ``<tag>...</tag>`` pair, trimmed.

    ``verdict`` must be exactly ALIGNED or NOT_ALIGNED, ``selected`` a
    positive integer; ``fixed_formal_statement`` loses its lean fence.
    """
    if tag not in KNOWN_TAGS:
        raise ValueError(f"unsupported tag {tag!r}")
    text = _inner(output, tag)
    if tag == "verdict":
        if text not in VERDICTS:
            raise InvalidVerdict(f"verdict must be ALIGNED or NOT_ALIGNED, got {text!r}")
    elif tag == "selected":
        if not re.fullmatch(r"\+?\d+", text) or int(text) < 1:
            raise InvalidSelection(f"selection must be a positive integer, got {text!r}")
        text = str(int(text))
    elif tag == "fixed_formal_statement":
        m = _FENCE.search(text)
        if m is not None:
            text = m.group(2).strip()
    return text


def extract_lean_blocks(output: str) -> list[str]:
    return [m.group(2).strip("\n") for m in _FENCE.finditer(output)]


def extract_lean_block(output: str) -> str:
    """Contents of the last lean fence; the trimmed output when there is none."""
    blocks = extract_lean_blocks(output)
    if blocks:
        return blocks[-1]
    return output.strip()


_ITEM = re.compile(r"^\s*(?:\d+[.)]|[-*•])\s+(.+?)\s*$")


def parse_numbered_list(output: str) -> list[str]:
    """Items of a numbered (``1.``/``1)``) or bulleted list, in order."""
    items = []
    for line in output.splitlines():
        m = _ITEM.match(line)
        if m:
            item = m.group(1).strip().strip("`").strip()
            if len(item) >= 2 and item[0] == item[-1] and item[0] in "\"'":
                item = item[1:-1].strip()
            if item:
                items.append(item)
    return items


_JUDGMENT = re.compile(r"Final Judgment:[\s*]*(?:(Incorrect|Correct)(?![a-z]))?")


def parse_judgment(output: str) -> int:
    """1 when the last "Final Judgment:" says Correct, 0 when it says Incorrect."""
    found = _JUDGMENT.findall(output)
    if not found or found[-1] not in ("Correct", "Incorrect"):
        raise JudgmentMissing("no 'Final Judgment:' verdict in output")
    return 1 if found[-1] == "Correct" else 0
