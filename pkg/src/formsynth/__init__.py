"""Formal-mathematics data synthesis: a formalize-then-prove workflow with
pluggable model, checker and retrieval backends, decoupled training-sample
extraction, and ensemble verification metrics."""

from .core import Mode, Outcome, Phase, Problem, Trajectory
from .pipeline import Budgets, Workflow, run_problem

__version__ = "0.1.0"

__all__ = ["Budgets", "Mode", "Outcome", "Phase", "Problem", "Trajectory", "Workflow", "run_problem"]
