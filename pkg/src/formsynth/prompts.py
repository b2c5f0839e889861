"""Prompt templates.

Templates are Jinja2 files named ``<name>.j2``. The bundled set lives in
``formsynth/templates``; a user directory, when given, is searched first so
individual templates can be replaced without copying the rest.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Iterable, Optional, Union

import jinja2

from .core import Premise

TEMPLATE_NAMES = (
    "normalize",
    "queries",
    "premise_selection",
    "formalize",
    "repair",
    "semantic_check",
    "selection",
    "prove",
    "refine",
    "informal_proof",
    "sketch",
    "subgoal_extraction",
    "subgoal_proof",
    "assembly",
    "verification",
)


class Templates:
    def __init__(self, override_dir: Optional[Union[str, Path]] = None):
        loaders: list[jinja2.BaseLoader] = []
        if override_dir is not None:
            loaders.append(jinja2.FileSystemLoader(str(override_dir)))
        loaders.append(jinja2.PackageLoader("formsynth", "templates"))
        self.env = jinja2.Environment(
            loader=jinja2.ChoiceLoader(loaders),
            undefined=jinja2.StrictUndefined,
            autoescape=False,
            keep_trailing_newline=False,
        )

    def render(self, name: str, **context) -> str:
        return self.env.get_template(f"{name}.j2").render(**context)


def render_premises(premises: Iterable[Premise]) -> str:
    """One ``name : signature`` line per premise."""
    return "\n".join(p.render() for p in premises)


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()
