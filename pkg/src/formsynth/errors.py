"""Exception hierarchy.

Errors that a pipeline stage recovers from internally (a failed candidate,
an unparseable tag) are still raised by the low-level helpers; the stage
decides whether to catch them.
"""

from __future__ import annotations


class FormsynthError(Exception):
    """Base class for every error raised by this package."""


# -- problems / trajectories -------------------------------------------------


class ProblemError(FormsynthError, ValueError):
    pass


class MissingField(ProblemError):
    def __init__(self, name: str):
        super().__init__(f"missing required field: {name}")
        self.name = name


class EmptyStatement(ProblemError):
    def __init__(self, problem_id: str = ""):
        super().__init__(f"informal statement is empty (problem {problem_id!r})")
        self.problem_id = problem_id


class InvalidField(ProblemError):
    def __init__(self, name: str, value: object):
        super().__init__(f"invalid value for {name}: {value!r}")
        self.name = name
        self.value = value


class DuplicateProblem(ProblemError):
    def __init__(self, problem_id: str):
        super().__init__(f"duplicate problem id: {problem_id!r}")
        self.problem_id = problem_id


class PhaseOrderViolation(FormsynthError):
    def __init__(self, last, attempted):
        super().__init__(f"phase {attempted} cannot follow {last}")
        self.last = last
        self.attempted = attempted


# -- gateway -----------------------------------------------------------------


class GatewayError(FormsynthError):
    pass


class BackendUnavailable(GatewayError):
    pass


class TransportError(GatewayError):
    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class EmptyCompletion(GatewayError):
    pass


class UnknownModel(GatewayError, KeyError):
    def __init__(self, model_id: str):
        super().__init__(model_id)
        self.model_id = model_id

    def __str__(self) -> str:
        return f"no price entry for model {self.model_id!r}"


# -- checker -----------------------------------------------------------------


class CheckerError(FormsynthError):
    pass


class CheckerTimeout(CheckerError):
    def __init__(self, limit: float):
        super().__init__(f"checker exceeded {limit:g}s wall clock")
        self.limit = limit


class ToolchainMissing(CheckerError):
    pass


class ScratchIOError(CheckerError, OSError):
    pass


# -- retrieval ---------------------------------------------------------------


class RetrievalError(FormsynthError):
    pass


class NoQueriesParsed(RetrievalError):
    pass


class SearchUnavailable(RetrievalError):
    pass


class SelectionParseError(RetrievalError):
    pass


# -- tagged output -----------------------------------------------------------


class ParseError(FormsynthError, ValueError):
    pass


class TagMissing(ParseError):
    def __init__(self, tag: str):
        super().__init__(f"no <{tag}>...</{tag}> pair in output")
        self.tag = tag


class InvalidVerdict(ParseError):
    pass


class InvalidSelection(ParseError):
    pass


class JudgmentMissing(ParseError):
    pass


# -- pipeline stages ---------------------------------------------------------


class StageFailure(FormsynthError):
    pass


class AllCandidatesFailed(StageFailure):
    pass


class SketchFailed(StageFailure):
    pass


class NoSubgoalsExtracted(SketchFailed):
    pass


class AssemblyFailed(StageFailure):
    pass


# -- verification / reporting ------------------------------------------------


class EmptyPanel(FormsynthError, ValueError):
    pass


class EmptyVotes(FormsynthError, ValueError):
    pass


class UnknownSource(FormsynthError, ValueError):
    pass


class MissingDifficulty(FormsynthError, ValueError):
    pass


class NoProblems(FormsynthError, ValueError):
    """Raised when a rate is requested over zero problems."""


# -- config / persistence ----------------------------------------------------


class ConfigError(FormsynthError):
    pass


class SchemaVersionError(FormsynthError):
    pass


class UnknownProblem(FormsynthError, KeyError):
    def __init__(self, problem_id: str):
        super().__init__(problem_id)
        self.problem_id = problem_id

    def __str__(self) -> str:
        return f"no trajectory for problem {self.problem_id!r}"
