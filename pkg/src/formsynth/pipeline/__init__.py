"""The formalization and proving state machines."""

from .base import Budgets, Cancelled, Scope, StageResult, Workflow, source_key
from .proof import (
    assemble_proof,
    expert_prove,
    extract_subgoals,
    generate_sketch,
    refine_attempt,
    refine_proof,
    refine_prompt,
    write_informal_proof,
)
from .runner import run_problem
from .statement import (
    filter_aligned,
    formalize_statement,
    normalize_statement,
    retrieve_premises,
    select_best,
    semantic_check,
)
from .subgoals import solve_one, solve_subgoals

__all__ = [
    "Budgets", "Cancelled", "Scope", "StageResult", "Workflow", "assemble_proof", "expert_prove",
    "extract_subgoals", "filter_aligned", "formalize_statement", "generate_sketch", "normalize_statement",
    "refine_attempt", "refine_proof", "refine_prompt", "retrieve_premises", "run_problem", "select_best",
    "semantic_check", "solve_one", "solve_subgoals", "source_key", "write_informal_proof",
]
