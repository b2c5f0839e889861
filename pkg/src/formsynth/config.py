"""Run configuration: one JSON file, ``${VAR}`` interpolation from the environment.

Example (mock world, no network)::

    {
      "mode": "agentic",
      "mock": {"world": "golden"},
      "paths": {"store": "runs/store", "datasets": "runs/datasets", "reports": "runs/reports"}
    }

A live configuration replaces ``mock`` with ``backends`` (one entry per
call kind) and points ``checker`` at a Lake project.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from .core import CallKind, Mode, Problem, load_problems
from .errors import ConfigError
from .gateway import DEFAULT_PRICES, FunctionBackend, default_temperature, Gateway, HttpChatBackend, MockScript, PriceEntry
from .leancheck import CheckRule, LeanChecker, MockChecker
from .pipeline import Budgets, Workflow
from .prompts import Templates
from .retrieval import HttpIndex, MockIndex
from .scenarios import CHECK_RULES, FORMALIZER_MODEL, GENERAL_MODEL, PROVER_MODEL, WORLDS, World, gateway_for
from .verification import DEFAULT_PANEL, VerifierPanel

_VAR = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")

# the offline models are billed like the cheap hosted general model so cost lines are not all zero
MOCK_PRICES = (
    PriceEntry(GENERAL_MODEL, "0.50", "3.00"),
    PriceEntry(FORMALIZER_MODEL, "0", "0"),
    PriceEntry(PROVER_MODEL, "0", "0"),
)


def interpolate(value: Any, env: Mapping[str, str]) -> Any:
    if isinstance(value, str):
        def sub(m: re.Match) -> str:
            if m.group(1) not in env:
                raise ConfigError(f"environment variable {m.group(1)} is not set")
            return env[m.group(1)]
        return _VAR.sub(sub, value)
    if isinstance(value, list):
        return [interpolate(v, env) for v in value]
    if isinstance(value, dict):
        return {k: interpolate(v, env) for k, v in value.items()}
    return value


@dataclass(frozen=True)
class BackendConfig:
    model_id: str
    endpoint: Optional[str] = None
    api_key: Optional[str] = None
    temperature: Optional[float] = None
    gemini_style: bool = False
    timeout: float = 600.0
    kind: str = "http"  # http | mock
    verdict: str = "Correct"  # mock judges only
    reject: tuple[str, ...] = ()  # mock judges: prompts containing any of these get "Incorrect"

    @property
    def effective_temperature(self) -> float:
        if self.temperature is not None:
            return self.temperature
        return default_temperature(self.gemini_style)

    @classmethod
    def parse(cls, d: Mapping[str, Any], where: str) -> "BackendConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
        if "model_id" not in d:
            raise ConfigError(f"{where}: model_id is required")
        cfg = cls(**{**d, "reject": tuple(d.get("reject", ()))})
        if cfg.kind not in ("http", "mock"):
            raise ConfigError(f"{where}: kind must be http or mock")
        if cfg.kind == "http" and not cfg.endpoint:
            raise ConfigError(f"{where}: endpoint is required for http backends")
        return cfg

    def build(self):
        if self.kind == "mock":
            def reply(request) -> str:
                bad = any(s in request.prompt for s in self.reject)
                return f"Checked.\nFinal Judgment: {'Incorrect' if bad else self.verdict}"
            return FunctionBackend(self.model_id, reply, self.effective_temperature)
        return HttpChatBackend(self.model_id, self.endpoint, self.api_key, self.effective_temperature, self.timeout)


@dataclass(frozen=True)
class Paths:
    problems: Optional[Path] = None
    store: Path = Path("store")
    datasets: Path = Path("datasets")
    reports: Path = Path("reports")
    votes: Optional[Path] = None

    @property
    def votes_file(self) -> Path:
        return self.votes or self.store / "votes.jsonl"


@dataclass
class RunConfig:
    mode: Mode = Mode.AGENTIC
    backends: dict[CallKind, BackendConfig] = field(default_factory=dict)
    mock: Optional[dict[str, Any]] = None
    panel: VerifierPanel = DEFAULT_PANEL
    judges: dict[str, BackendConfig] = field(default_factory=dict)
    generator_identity: Optional[str] = None
    prices: dict[str, PriceEntry] = field(default_factory=dict)
    budgets: Budgets = field(default_factory=Budgets)
    checker: dict[str, Any] = field(default_factory=lambda: {"kind": "mock"})
    retrieval: dict[str, Any] = field(default_factory=lambda: {"kind": "mock"})
    problem_workers: int = 1
    search_workers: int = 1
    judge_workers: int = 1
    max_attempts: int = 1
    templates_dir: Optional[Path] = None
    paths: Paths = field(default_factory=Paths)
    seed: int = 0

    # -- construction ---------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], base_dir: Union[str, Path] = ".",
                  env: Optional[Mapping[str, str]] = None) -> "RunConfig":
        raw = interpolate(dict(raw), os.environ if env is None else env)
        base = Path(base_dir)

        def path(v: Optional[str]) -> Optional[Path]:
            if v is None:
                return None
            p = Path(v)
            return p if p.is_absolute() else base / p

        try:
            cfg = cls(mode=Mode(raw.get("mode", "agentic")))
        except ValueError:
            raise ConfigError(f"mode must be agentic or baseline, got {raw.get('mode')!r}") from None
        cfg.mock = raw.get("mock")
        for name, d in (raw.get("backends") or {}).items():
            try:
                kind = CallKind(name)
            except ValueError:
                raise ConfigError(f"unknown backend role {name!r}") from None
            cfg.backends[kind] = BackendConfig.parse(d, f"backends.{name}")

        panel = raw.get("panel") or {}
        if "identities" in panel:
            try:
                cfg.panel = VerifierPanel.from_mapping(panel["identities"])
            except ValueError as exc:
                raise ConfigError(f"panel: {exc}") from None
        cfg.generator_identity = panel.get("generator_identity")
        for mid, d in (panel.get("judges") or {}).items():
            cfg.judges[mid] = BackendConfig.parse({"model_id": mid, **d}, f"panel.judges.{mid}")

        prices = raw.get("prices")
        entries = list(DEFAULT_PRICES) + list(MOCK_PRICES) if prices is None else []
        for p in prices or ():
            try:
                entries.append(PriceEntry(p["model_id"], p["input_per_million"], p["output_per_million"]))
            except (KeyError, ValueError, ArithmeticError) as exc:
                raise ConfigError(f"bad price entry {p!r}: {exc}") from None
        cfg.prices = {e.model_id: e for e in entries}

        try:
            cfg.budgets = Budgets(**(raw.get("budgets") or {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"budgets: {exc}") from None
        cfg.checker = dict(raw.get("checker") or {"kind": "mock"})
        cfg.retrieval = dict(raw.get("retrieval") or {"kind": "mock"})
        for key in ("path", "project_dir"):
            for section in (cfg.checker, cfg.retrieval):
                if section.get(key):
                    section[key] = str(path(section[key]))
        conc = raw.get("concurrency") or {}
        cfg.problem_workers = int(conc.get("problems", 1))
        cfg.search_workers = int(conc.get("search", 1))
        cfg.judge_workers = int(conc.get("judges", 1))
        cfg.max_attempts = int(raw.get("max_attempts", 1))
        cfg.templates_dir = path(raw.get("templates_dir"))
        p = raw.get("paths") or {}
        cfg.paths = Paths(
            problems=path(p.get("problems")),
            store=path(p.get("store", "store")),
            datasets=path(p.get("datasets", "datasets")),
            reports=path(p.get("reports", "reports")),
            votes=path(p.get("votes")),
        )
        cfg.seed = int(raw.get("seed", 0))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.mock is None:
            missing = [k.value for k in CallKind if k not in self.backends]
            if missing:
                raise ConfigError(f"no backend configured for {', '.join(missing)} (or set \"mock\")")
        else:
            if "world" in self.mock and self.mock["world"] not in WORLDS:
                raise ConfigError(f"unknown mock world {self.mock['world']!r}; known: {sorted(WORLDS)}")
            if "world" not in self.mock and "script" not in self.mock:
                raise ConfigError("mock needs a world name or a script path")
        for mid in self.model_ids():
            if mid not in self.prices:
                raise ConfigError(f"no price for model {mid!r}")
        if self.checker.get("kind", "mock") not in ("mock", "lean"):
            raise ConfigError("checker.kind must be mock or lean")
        if self.checker.get("kind") == "lean" and not self.checker.get("project_dir"):
            raise ConfigError("checker.project_dir is required for the lean checker")
        if self.retrieval.get("kind", "mock") not in ("mock", "http"):
            raise ConfigError("retrieval.kind must be mock or http")
        if self.retrieval.get("kind") == "http" and not self.retrieval.get("endpoint"):
            raise ConfigError("retrieval.endpoint is required for http retrieval")
        if self.paths.problems is not None and not self.paths.problems.exists():
            raise ConfigError(f"problems file not found: {self.paths.problems}")
        if self.mock is None and self.paths.problems is None:
            raise ConfigError("paths.problems is required without a mock world")
        if min(self.problem_workers, self.search_workers, self.judge_workers, self.max_attempts) < 1:
            raise ConfigError("concurrency widths and max_attempts must be >= 1")

    def model_ids(self) -> list[str]:
        if self.mock is not None:
            ids = [GENERAL_MODEL, FORMALIZER_MODEL, PROVER_MODEL]
        else:
            ids = [b.model_id for b in self.backends.values()]
        return ids + [m.model_id for m in self.panel.members]

    # -- builders -----------------------------------------------------------------

    def world(self) -> Optional[World]:
        if self.mock and "world" in self.mock:
            return WORLDS[self.mock["world"]]()
        return None

    def problems(self) -> list[Problem]:
        if self.paths.problems is not None:
            with open(self.paths.problems, encoding="utf-8") as fh:
                return load_problems(fh)
        world = self.world()
        return list(world.problems) if world else []

    def _judge_backends(self) -> dict[str, Any]:
        judges = dict(self.judges)
        if self.mock is not None:
            # offline runs get an agreeable stand-in for every unconfigured judge
            for m in self.panel.members:
                judges.setdefault(m.model_id, BackendConfig(m.model_id, kind="mock"))
        else:
            missing = [m.model_id for m in self.panel.members if m.model_id not in judges]
            if missing:
                raise ConfigError(f"no judge backend for panel member(s) {missing}; "
                                  "configure panel.judges or narrow panel.identities")
        return {mid: cfg.build() for mid, cfg in judges.items()}

    def gateway(self) -> Gateway:
        if self.mock is not None:
            if "world" in self.mock:
                script = self.world().script()
            else:
                script_path = Path(self.mock["script"])
                try:
                    script = MockScript.from_dicts(json.loads(script_path.read_text(encoding="utf-8")))
                except (OSError, ValueError, KeyError) as exc:
                    raise ConfigError(f"cannot load mock script {script_path}: {exc}") from None
            gw = gateway_for(script)
            gw.named.update(self._judge_backends())
            return gw
        return Gateway({k: b.build() for k, b in self.backends.items()}, self._judge_backends())

    def checker_backend(self):
        if self.checker.get("kind", "mock") == "lean":
            command = self.checker.get("command", ("lake", "env", "lean", "--json"))
            return LeanChecker(self.checker["project_dir"], tuple(command), float(self.checker.get("timeout", 300)),
                               int(self.checker.get("max_parallel_checks", 4)))
        rules = self.checker.get("rules")
        if self.checker.get("path"):
            rules = json.loads(Path(self.checker["path"]).read_text(encoding="utf-8"))
        return MockChecker(CHECK_RULES if rules is None else [CheckRule.from_dict(r) for r in rules])

    def index(self):
        if self.retrieval.get("kind", "mock") == "http":
            return HttpIndex(self.retrieval["endpoint"], self.retrieval.get("api_key"))
        if self.retrieval.get("path"):
            return MockIndex.from_jsonl(self.retrieval["path"])
        return MockIndex.bundled()

    def workflow(self, gateway: Optional[Gateway] = None) -> Workflow:
        return Workflow(gateway or self.gateway(), self.checker_backend(), self.index(), self.budgets,
                        Templates(self.templates_dir), self.max_attempts, self.search_workers)

    def generator(self) -> str:
        """Identity whose panel members sit out of voting."""
        if self.generator_identity:
            return self.generator_identity
        general = GENERAL_MODEL if self.mock is not None else self.backends[CallKind.GENERAL].model_id
        return self.panel.identity_of(general)


def load_config(path: Union[str, Path], env: Optional[Mapping[str, str]] = None) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return RunConfig.from_dict(raw, path.parent, env)
