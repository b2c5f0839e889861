"""Human-readable dump of a stored trajectory."""

from __future__ import annotations

from collections import defaultdict
from typing import Any, Mapping

from .core import Problem, Trajectory
from .leancheck import Diagnostic, annotate_errors

# payload keys too long for the one-line event summary
_BULKY = {"source", "fixed_source", "final_source", "fix_source", "diagnostics", "fixed_diagnostics", "fix_diagnostics",
          "text", "informal_proof", "lemma_source", "proof", "statement", "hits", "selected", "unselected",
          "sources", "subgoals", "dropped", "queries", "prompt_hash", "raw_choice", "fix_ok"}


def _short(value: Any) -> str:
    text = str(value)
    return text if len(text) <= 60 else text[:57] + "..."


def _errors_block(source: str, diagnostics: list[Mapping[str, Any]]) -> str:
    diags = [Diagnostic.from_dict(d) for d in diagnostics]
    errors = [d for d in diags if d.is_error]
    if not source or not errors:
        return ""
    return annotate_errors(source, errors, context_lines=2)


def _indent(text: str, pad: str = "      ") -> str:
    return "\n".join(pad + line if line else line for line in text.splitlines())


def format_trajectory(problem: Problem, trajectory: Trajectory) -> str:
    lines = [f"problem {problem.id} ({problem.source.value}, mode {trajectory.mode.value})",
             f"outcome {trajectory.outcome.value if trajectory.outcome else 'incomplete'}", ""]
    current = None
    for event in trajectory.events:
        if event.phase is not current:
            current = event.phase
            lines.append(f"[{current.value}]")
        data = event.data
        brief = " ".join(f"{k}={_short(v)}" for k, v in data.items() if k not in _BULKY)
        lines.append(f"  {event.kind}" + (f" {brief}" if brief else ""))
        for src_key, diag_key in (("source", "diagnostics"), ("fixed_source", "fixed_diagnostics")):
            block = _errors_block(data.get(src_key) or "", list(data.get(diag_key) or ()))
            if block:
                lines.append(_indent(block))
    lines += ["", "usage"]
    per_model: dict[str, list[int]] = defaultdict(lambda: [0, 0, 0])
    for u in trajectory.usage:
        row = per_model[f"{u.model_id} ({u.call_kind.value})"]
        row[0] += 1
        row[1] += u.prompt_tokens
        row[2] += u.completion_tokens
    for name in sorted(per_model):
        calls, prompt, completion = per_model[name]
        lines.append(f"  {name}: {calls} calls, {prompt} prompt tokens, {completion} completion tokens")
    lines.append(f"  expert calls {trajectory.expert_calls}, general calls {trajectory.general_calls}")
    return "\n".join(lines) + "\n"
