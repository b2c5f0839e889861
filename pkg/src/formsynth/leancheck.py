"""Lean checker client.

Two backends share one contract, :meth:`check(source, mode)`:

* :class:`LeanChecker` writes the source into a scratch file inside a
  prepared (warm) Lake project and runs the toolchain as a subprocess.
* :class:`MockChecker` applies scripted regex rules, emulating the
  toolchain's diagnostics including the ``declaration uses 'sorry'``
  warning.

Diagnostic positions follow Lean: lines are 1-based, columns are 0-based
codepoint offsets.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import re
import shutil
import subprocess
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Protocol, Sequence

from .errors import CheckerTimeout, ScratchIOError, ToolchainMissing

log = logging.getLogger(__name__)

SORRY_WARNING = "declaration uses 'sorry'"
LEAN_VERSION = "v4.19.0"


class CheckMode(str, enum.Enum):
    STRICT = "strict"      # errors and sorries both fail
    SORRY_OK = "sorry_ok"  # errors fail, sorries allowed


class Severity(str, enum.Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    start_line: int
    start_col: int
    end_line: int
    end_col: int
    message: str

    def __post_init__(self):
        if (self.end_line, self.end_col) < (self.start_line, self.start_col):
            raise ValueError("diagnostic end precedes start")
        if not self.message:
            raise ValueError("diagnostic message must be non-empty")

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    @property
    def is_sorry_warning(self) -> bool:
        return self.severity is Severity.WARNING and self.message.startswith(SORRY_WARNING)

    def to_dict(self) -> dict[str, Any]:
        return {
            "severity": self.severity.value,
            "start_line": self.start_line,
            "start_col": self.start_col,
            "end_line": self.end_line,
            "end_col": self.end_col,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Diagnostic":
        return cls(
            Severity(d["severity"]), d["start_line"], d["start_col"], d["end_line"], d["end_col"], d["message"]
        )


@dataclass(frozen=True)
class CheckReport:
    ok: bool
    diagnostics: tuple[Diagnostic, ...] = ()
    uses_sorry: bool = False
    elapsed_ms: int = 0

    @classmethod
    def build(cls, diagnostics: Iterable[Diagnostic], uses_sorry: bool, mode: CheckMode, elapsed_ms: int = 0) -> "CheckReport":
        diagnostics = tuple(diagnostics)
        has_error = any(d.is_error for d in diagnostics)
        ok = not has_error and (mode is CheckMode.SORRY_OK or not uses_sorry)
        return cls(ok, diagnostics, uses_sorry, elapsed_ms)

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.is_error]

    def repair_diagnostics(self) -> list[Diagnostic]:
        """Diagnostics worth showing a repair prompt: errors, else sorry warnings."""
        return self.errors or [d for d in self.diagnostics if d.is_sorry_warning]

    def to_dict(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "uses_sorry": self.uses_sorry,
            "diagnostics": [d.to_dict() for d in self.diagnostics],
        }


# -- parsing -----------------------------------------------------------------

_HEADER = re.compile(
    r"^(?P<file>[^\n]*?):(?P<line>\d+):(?P<col>\d+):\s*"
    r"(?P<sev>error|warning|info)(?:\([^)]*\))?:\s?(?P<msg>.*)$"
)


@dataclass
class ParsedOutput:
    diagnostics: list[Diagnostic] = field(default_factory=list)
    skipped: int = 0
    uses_sorry: bool = False


def _from_json_line(obj: Mapping[str, Any]) -> Optional[Diagnostic]:
    sev = obj.get("severity")
    if sev not in ("error", "warning"):
        return None
    pos = obj.get("pos") or {}
    end = obj.get("endPos") or pos
    line, col = int(pos.get("line", 1)), int(pos.get("column", 0))
    end_line, end_col = int(end.get("line", line)), int(end.get("column", col))
    if (end_line, end_col) < (line, col):
        end_line, end_col = line, col
    msg = str(obj.get("data", "")).rstrip() or sev
    return Diagnostic(Severity(sev), line, col, end_line, end_col, msg)


def parse_checker_output(raw: str) -> ParsedOutput:
    """Parse toolchain output (plain ``file:line:col: severity: msg`` or ``--json`` lines)."""
    out = ParsedOutput()
    current: Optional[dict[str, Any]] = None

    def flush():
        nonlocal current
        if current is not None and current["sev"] != "info":
            msg = "\n".join(current["lines"]).rstrip() or current["sev"]
            out.diagnostics.append(
                Diagnostic(Severity(current["sev"]), current["line"], current["col"], current["line"], current["col"], msg)
            )
        current = None

    for line in raw.splitlines():
        stripped = line.strip()
        if stripped.startswith("{") and stripped.endswith("}"):
            try:
                obj = json.loads(stripped)
            except ValueError:
                obj = None
            if isinstance(obj, dict) and "severity" in obj:
                flush()
                diag = _from_json_line(obj)
                if diag is None:
                    out.skipped += 1
                else:
                    out.diagnostics.append(diag)
                continue
        m = _HEADER.match(line)
        if m:
            flush()
            current = {
                "sev": m["sev"],
                "line": int(m["line"]),
                "col": int(m["col"]),
                "lines": [m["msg"]],
            }
            if m["sev"] == "info":
                out.skipped += 1
        elif current is not None:
            current["lines"].append(line)
        elif stripped:
            out.skipped += 1
    flush()
    out.uses_sorry = any(d.is_sorry_warning for d in out.diagnostics)
    return out


def parse_diagnostics(raw_checker_output: str) -> list[Diagnostic]:
    return parse_checker_output(raw_checker_output).diagnostics


# -- error annotation ------------------------------------------------------

ERROR_OPEN = "<error>"
ERROR_CLOSE = "</error>"


def _line_starts(source: str) -> list[int]:
    starts = [0]
    for m in re.finditer("\n", source):
        starts.append(m.end())
    return starts


def _offset(source: str, starts: Sequence[int], line: int, col: int) -> int:
    if line < 1:
        return 0
    if line > len(starts):
        return len(source)
    begin = starts[line - 1]
    stop = starts[line] - 1 if line < len(starts) else len(source)
    return min(begin + max(col, 0), stop)


def _span(source: str, starts: Sequence[int], diag: Diagnostic) -> tuple[int, int]:
    a = _offset(source, starts, diag.start_line, diag.start_col)
    b = _offset(source, starts, diag.end_line, diag.end_col)
    if b <= a:
        # no usable end position: run to the end of the start line
        nl = source.find("\n", a)
        b = len(source) if nl < 0 else nl
    return a, b


def annotate_errors(source: str, diagnostics: Sequence[Diagnostic], context_lines: Optional[int] = None) -> str:
    """Render numbered ``Error k:`` blocks with the failing span marked.

    Each block shows the source with one diagnostic's span wrapped in
    ``<error>``/``</error>``, followed by the message. Blocks are ordered by
    span. With ``context_lines=None`` every block carries the whole source,
    so stripping the markers gives back `source` exactly; an integer limits
    the snippet to that many lines before the span.
    """
    if not diagnostics:
        return ""
    starts = _line_starts(source)
    spans = [(_span(source, starts, d), i, d) for i, d in enumerate(diagnostics)]
    spans.sort(key=lambda t: (t[0][0], t[0][1], t[1]))
    blocks = []
    for k, ((a, b), _, diag) in enumerate(spans, start=1):
        marked = source[:a] + ERROR_OPEN + source[a:b] + ERROR_CLOSE + source[b:]
        if context_lines is not None:
            first = max(diag.start_line - context_lines, 1)
            last = max(diag.end_line, diag.start_line)
            lines = marked.split("\n")
            marked = "\n".join(lines[first - 1:last]) + "\n"
        blocks.append(
            f"Error {k}:\n\nCorresponding Code:\n```lean4\n{marked}\n```\n\nError Message: {diag.message}"
        )
    return "\n\n".join(blocks)


def strip_markers(text: str) -> str:
    return text.replace(ERROR_OPEN, "").replace(ERROR_CLOSE, "")


_BLOCK_CODE = re.compile(r"Corresponding Code:\n```lean4\n(.*?)\n```\n\nError Message:", re.DOTALL)


def annotated_snippets(annotated: str) -> list[str]:
    """The marked-up code of each block in :func:`annotate_errors` output."""
    return _BLOCK_CODE.findall(annotated)


# -- sorry / declaration scanning (used by the mock) --------------------------

_COMMENT = re.compile(r"/-.*?-/|--[^\n]*|\"(?:\\.|[^\"\\])*\"", re.DOTALL)
_DECL = re.compile(
    r"^(?:@\[[^\]]*\]\s*)?(?:(?:private|protected|noncomputable)\s+)*"
    r"(theorem|lemma|example|def|abbrev|instance)\b[ \t]*([^\s:({\[]*)",
    re.MULTILINE,
)
_SORRY = re.compile(r"(?<![\w.'])sorry(?![\w'])")


def blank_comments(source: str) -> str:
    """Replace comments and string literals with spaces, preserving offsets."""
    return _COMMENT.sub(lambda m: re.sub(r"[^\n]", " ", m.group(0)), source)


def position(source: str, offset: int) -> tuple[int, int]:
    line = source.count("\n", 0, offset) + 1
    col = offset - (source.rfind("\n", 0, offset) + 1)
    return line, col


def sorry_warnings(source: str) -> list[Diagnostic]:
    """One ``declaration uses 'sorry'`` warning per declaration containing a sorry token."""
    code = blank_comments(source)
    decls = list(_DECL.finditer(code))
    out = []
    for i, m in enumerate(decls):
        end = decls[i + 1].start() if i + 1 < len(decls) else len(code)
        if _SORRY.search(code, m.end(), end):
            anchor = m.start(2) if m.group(2) else m.start(1)
            line, col = position(source, anchor)
            out.append(Diagnostic(Severity.WARNING, line, col, line, col + max(len(m.group(2)), 1), SORRY_WARNING))
    return out


def has_declaration(source: str) -> bool:
    return _DECL.search(blank_comments(source)) is not None


# -- backends ----------------------------------------------------------------


class Checker(Protocol):
    def check(self, source: str, mode: CheckMode) -> CheckReport: ...


@dataclass(frozen=True)
class CheckRule:
    """Scripted diagnostic: every match of `pattern` becomes a diagnostic.

    The diagnostic covers the named group ``err`` when the pattern has one,
    else the whole match.
    """

    pattern: str
    message: str
    severity: Severity = Severity.ERROR
    timeout: bool = False

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CheckRule":
        return cls(d["pattern"], d.get("message", "error"), Severity(d.get("severity", "error")), bool(d.get("timeout", False)))


class MockChecker:
    """Rule-driven stand-in for the toolchain.

    Sources without any declaration fail with a parse error; every rule
    match yields a diagnostic; ``sorry`` tokens outside comments produce the
    toolchain's sorry warning. The result depends only on the source and
    mode, so the mock is deterministic and reentrant.
    """

    def __init__(self, rules: Iterable[CheckRule] = (), timeout: float = 300.0):
        self.rules = [(r, re.compile(r.pattern, re.DOTALL | re.MULTILINE)) for r in rules]
        self.timeout = timeout
        self._lock = threading.Lock()
        self.calls = 0

    @classmethod
    def from_dicts(cls, rules: Iterable[Mapping[str, Any]]) -> "MockChecker":
        return cls(CheckRule.from_dict(r) for r in rules)

    def diagnose(self, source: str) -> list[Diagnostic]:
        diags: list[Diagnostic] = []
        if not has_declaration(source):
            diags.append(Diagnostic(Severity.ERROR, 1, 0, 1, 0, "unexpected end of input; expected a declaration"))
        for rule, rx in self.rules:
            for m in rx.finditer(source):
                if rule.timeout:
                    raise CheckerTimeout(self.timeout)
                a, b = m.span("err") if "err" in rx.groupindex else m.span()
                l1, c1 = position(source, a)
                l2, c2 = position(source, b)
                diags.append(Diagnostic(rule.severity, l1, c1, l2, c2, rule.message))
        diags.extend(sorry_warnings(source))
        diags.sort(key=lambda d: (d.start_line, d.start_col))
        return diags

    def check(self, source: str, mode: CheckMode) -> CheckReport:
        if not source.strip():
            raise ValueError("source must be non-empty")
        with self._lock:
            self.calls += 1
        diags = self.diagnose(source)
        return CheckReport.build(diags, any(d.is_sorry_warning for d in diags), mode)


class LeanChecker:
    """Subprocess checker against a warm Lake project.

    The project (with Mathlib built) lives at `project_dir`; each check owns
    a uniquely named scratch file under ``<project_dir>/.formsynth_scratch``.
    At most `max_parallel_checks` toolchain processes run at once.
    """

    def __init__(
        self,
        project_dir: os.PathLike | str,
        command: Sequence[str] = ("lake", "env", "lean", "--json"),
        timeout: float = 300.0,
        max_parallel_checks: int = 4,
    ):
        self.project_dir = Path(project_dir)
        self.command = tuple(command)
        self.timeout = timeout
        self._slots = threading.BoundedSemaphore(max_parallel_checks)

    def available(self) -> bool:
        return self.project_dir.is_dir() and shutil.which(self.command[0]) is not None

    def _scratch(self) -> Path:
        scratch_dir = self.project_dir / ".formsynth_scratch"
        try:
            scratch_dir.mkdir(exist_ok=True)
        except OSError as exc:
            raise ScratchIOError(str(exc)) from exc
        return scratch_dir / f"Check_{uuid.uuid4().hex}.lean"

    def check(self, source: str, mode: CheckMode) -> CheckReport:
        if not source.strip():
            raise ValueError("source must be non-empty")
        if not self.project_dir.is_dir():
            raise ToolchainMissing(f"Lean project not found: {self.project_dir}")
        if shutil.which(self.command[0]) is None:
            raise ToolchainMissing(f"{self.command[0]} not on PATH")
        path = self._scratch()
        try:
            path.write_text(source, encoding="utf-8")
        except OSError as exc:
            raise ScratchIOError(str(exc)) from exc
        try:
            with self._slots:
                t0 = time.monotonic()
                try:
                    proc = subprocess.run(
                        [*self.command, str(path)],
                        cwd=self.project_dir,
                        capture_output=True,
                        text=True,
                        timeout=self.timeout,
                    )
                except subprocess.TimeoutExpired:
                    raise CheckerTimeout(self.timeout) from None
                except FileNotFoundError as exc:
                    raise ToolchainMissing(str(exc)) from exc
                elapsed = int((time.monotonic() - t0) * 1000)
        finally:
            try:
                path.unlink()
            except OSError:
                log.warning("could not remove scratch file %s", path)
        parsed = parse_checker_output(proc.stdout + "\n" + proc.stderr)
        if parsed.skipped:
            log.debug("skipped %d unparseable checker lines", parsed.skipped)
        diags = list(parsed.diagnostics)
        if proc.returncode != 0 and not any(d.is_error for d in diags):
            diags.append(Diagnostic(Severity.ERROR, 1, 0, 1, 0, f"toolchain exited with code {proc.returncode}"))
        return CheckReport.build(diags, parsed.uses_sorry, mode, elapsed)
