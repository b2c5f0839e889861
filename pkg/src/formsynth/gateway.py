"""Chat-model gateway: backends, sampling, usage ledger and cost accounting.

Every model invocation, successful or not, leaves exactly one
:class:`~formsynth.core.UsageRecord` behind. Expert-call totals are simply the
number of expert-kind records, so a pass@4 request costs four calls even if a
transport error eats one of the samples.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP, localcontext
from typing import Any, Callable, Iterable, Mapping, Optional, Protocol, Sequence, Union

import httpx

from .core import CallKind, Phase, UsageRecord
from .errors import BackendUnavailable, EmptyCompletion, TransportError, UnknownModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChatRequest:
    role_kind: CallKind
    prompt: str
    temperature: Optional[float] = None  # None: the backend's configured default
    max_attempts: int = 1
    phase: Optional[Phase] = None
    purpose: str = ""
    model_id: Optional[str] = None  # route to a named backend (panel judges)

    def __post_init__(self):
        if self.temperature is not None and self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: UsageRecord


@dataclass(frozen=True)
class SampleError:
    """Placeholder for a sample slot whose invocation failed."""

    slot: int
    error: Exception


@dataclass(frozen=True)
class Completion:
    text: str
    prompt_tokens: int
    completion_tokens: int


def default_temperature(gemini_style: bool) -> float:
    return 1.0 if gemini_style else 0.0


class Backend(Protocol):
    model_id: str
    temperature: float

    def generate(self, request: ChatRequest, temperature: float) -> Completion: ...


def _word_count(text: str) -> int:
    return len(text.split())


# -- mock backends -----------------------------------------------------------


@dataclass(frozen=True)
class MockRule:
    """One scripted reply.

    Rules sharing the same matcher (phase, purpose, substring, role) form a
    queue consumed in order. ``times=None`` makes a reply repeat forever.
    ``error="transport"`` scripts a transport failure instead of a reply.
    """

    phase: Optional[Phase]
    response: str = ""
    substring: Optional[str] = None
    purpose: Optional[str] = None
    role_kind: Optional[CallKind] = None
    prompt_tokens: Optional[int] = None
    completion_tokens: Optional[int] = None
    error: Optional[str] = None
    times: Optional[int] = 1

    @property
    def matcher(self) -> tuple:
        return (self.phase, self.purpose, self.substring, self.role_kind)

    def matches(self, request: ChatRequest) -> bool:
        if self.phase is not None and request.phase is not self.phase:
            return False
        if self.purpose is not None and request.purpose != self.purpose:
            return False
        if self.role_kind is not None and request.role_kind is not self.role_kind:
            return False
        return self.substring is None or self.substring in request.prompt

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MockRule":
        return cls(
            phase=Phase(d["phase"]) if d.get("phase") else None,
            response=d.get("response", ""),
            substring=d.get("substring"),
            purpose=d.get("purpose"),
            role_kind=CallKind(d["role_kind"]) if d.get("role_kind") else None,
            prompt_tokens=d.get("prompt_tokens"),
            completion_tokens=d.get("completion_tokens"),
            error=d.get("error"),
            times=d.get("times", 1),
        )


class ScriptExhausted(BackendUnavailable):
    pass


class MockScript:
    """Deterministic scripted replies keyed by request matchers."""

    def __init__(self, rules: Iterable[MockRule] = ()):
        self.rules = list(rules)
        self._lock = threading.Lock()
        self._queues: dict[tuple, list[list]] = {}
        self._order: list[tuple] = []
        for rule in self.rules:
            if rule.matcher not in self._queues:
                self._queues[rule.matcher] = []
                self._order.append(rule.matcher)
            self._queues[rule.matcher].append([rule, rule.times])

    @classmethod
    def from_dicts(cls, rules: Iterable[Mapping[str, Any]]) -> "MockScript":
        return cls(MockRule.from_dict(r) for r in rules)

    def next_rule(self, request: ChatRequest) -> MockRule:
        with self._lock:
            for key in self._order:
                queue = self._queues[key]
                if not queue or not queue[0][0].matches(request):
                    continue
                entry = queue[0]
                if entry[1] is not None:
                    entry[1] -= 1
                    if entry[1] <= 0:
                        queue.pop(0)
                return entry[0]
        raise ScriptExhausted(
            f"no scripted reply for phase={request.phase} purpose={request.purpose!r}"
        )

    def pending(self) -> int:
        """Number of finite scripted replies not yet consumed."""
        with self._lock:
            return sum(e[1] for q in self._queues.values() for e in q if e[1] is not None)


class ScriptedBackend:
    def __init__(self, model_id: str, script: MockScript, temperature: float = 0.0):
        self.model_id = model_id
        self.script = script
        self.temperature = temperature

    def generate(self, request: ChatRequest, temperature: float) -> Completion:
        rule = self.script.next_rule(request)
        if rule.error == "transport":
            raise TransportError(f"scripted transport failure ({self.model_id})")
        return Completion(
            rule.response,
            _word_count(request.prompt) if rule.prompt_tokens is None else rule.prompt_tokens,
            _word_count(rule.response) if rule.completion_tokens is None else rule.completion_tokens,
        )


class FunctionBackend:
    """Backend driven by a plain callable ``request -> text``.

    The callable may raise :class:`TransportError` to simulate failures.
    """

    def __init__(self, model_id: str, fn: Callable[[ChatRequest], str], temperature: float = 0.0):
        self.model_id = model_id
        self.fn = fn
        self.temperature = temperature

    def generate(self, request: ChatRequest, temperature: float) -> Completion:
        text = self.fn(request)
        return Completion(text, _word_count(request.prompt), _word_count(text))


# -- live backend ------------------------------------------------------------


class HttpChatBackend:
    """OpenAI-style ``/chat/completions`` endpoint."""

    def __init__(
        self,
        model_id: str,
        endpoint: str,
        api_key: Optional[str] = None,
        temperature: float = 0.0,
        timeout: float = 600.0,
        client: Optional[httpx.Client] = None,
    ):
        self.model_id = model_id
        self.endpoint = endpoint
        self.api_key = api_key
        self.temperature = temperature
        self.timeout = timeout
        self._client = client or httpx.Client(timeout=timeout)

    def payload(self, request: ChatRequest, temperature: float) -> dict[str, Any]:
        return {
            "model": self.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": temperature,
        }

    def generate(self, request: ChatRequest, temperature: float) -> Completion:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(self.endpoint, json=self.payload(request, temperature), headers=headers)
        except httpx.HTTPError as exc:
            raise TransportError(f"{self.model_id}: {exc}") from exc
        if resp.status_code >= 500 or resp.status_code == 429:
            raise TransportError(f"{self.model_id}: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendUnavailable(f"{self.model_id}: HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"{self.model_id}: malformed response") from exc
        usage = body.get("usage") or {}
        return Completion(
            text,
            int(usage.get("prompt_tokens", 0)),
            int(usage.get("completion_tokens", 0)),
        )


# -- ledger & gateway --------------------------------------------------------


class UsageLedger:
    """Thread-safe append-only sink of usage records."""

    def __init__(self, records: Iterable[UsageRecord] = ()):
        self._records = list(records)
        self._lock = threading.Lock()

    def add(self, record: UsageRecord) -> None:
        with self._lock:
            self._records.append(record)

    def extend(self, records: Iterable[UsageRecord]) -> None:
        with self._lock:
            self._records.extend(records)

    @property
    def records(self) -> list[UsageRecord]:
        with self._lock:
            return list(self._records)

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    @property
    def expert_calls(self) -> int:
        return sum(1 for r in self.records if r.call_kind.is_expert)

    @property
    def general_calls(self) -> int:
        return sum(1 for r in self.records if not r.call_kind.is_expert)


SampleResult = Union[ChatResponse, SampleError]


class Gateway:
    """Routes requests to per-role backends and records usage.

    ``backends`` maps each :class:`CallKind` to a backend; ``named`` holds
    additional backends addressed by ``ChatRequest.model_id`` (verifier
    panel members).
    """

    def __init__(
        self,
        backends: Mapping[CallKind, Backend],
        named: Optional[Mapping[str, Backend]] = None,
    ):
        self.backends = dict(backends)
        self.named = dict(named or {})
        self.ledger = UsageLedger()

    @property
    def expert_calls(self) -> int:
        return self.ledger.expert_calls

    @property
    def general_calls(self) -> int:
        return self.ledger.general_calls

    def backend_for(self, request: ChatRequest) -> Backend:
        if request.model_id is not None:
            if request.model_id in self.named:
                return self.named[request.model_id]
            for backend in self.backends.values():
                if backend.model_id == request.model_id:
                    return backend
            raise BackendUnavailable(f"no backend for model {request.model_id!r}")
        try:
            return self.backends[request.role_kind]
        except KeyError:
            raise BackendUnavailable(f"no backend configured for {request.role_kind.value}") from None

    def _record(self, record: UsageRecord, ledger: Optional[UsageLedger]) -> None:
        self.ledger.add(record)
        if ledger is not None:
            ledger.add(record)

    def complete(self, request: ChatRequest, ledger: Optional[UsageLedger] = None) -> ChatResponse:
        backend = self.backend_for(request)
        temperature = backend.temperature if request.temperature is None else request.temperature
        last_exc: Optional[TransportError] = None
        for attempt in range(1, request.max_attempts + 1):
            try:
                completion = backend.generate(request, temperature)
            except TransportError as exc:
                last_exc = exc
                log.warning("transport failure %d/%d on %s: %s", attempt, request.max_attempts, backend.model_id, exc)
                continue
            usage = UsageRecord(backend.model_id, completion.prompt_tokens, completion.completion_tokens, request.role_kind)
            self._record(usage, ledger)
            if not completion.text.strip():
                raise EmptyCompletion(f"{backend.model_id} returned an empty completion")
            return ChatResponse(completion.text, usage)
        # the invocation still happened; it is billed at zero tokens
        self._record(UsageRecord(backend.model_id, 0, 0, request.role_kind), ledger)
        raise TransportError(
            f"{backend.model_id}: gave up after {request.max_attempts} attempt(s): {last_exc}",
            attempts=request.max_attempts,
        )

    def sample_n(self, request: ChatRequest, n: int, ledger: Optional[UsageLedger] = None) -> list[SampleResult]:
        """Draw `n` independent completions; failed slots become :class:`SampleError`."""
        if n < 1:
            raise ValueError("n must be >= 1")
        out: list[SampleResult] = []
        for slot in range(n):
            try:
                out.append(self.complete(request, ledger))
            except (TransportError, EmptyCompletion) as exc:
                out.append(SampleError(slot, exc))
        return out


# -- pricing -----------------------------------------------------------------


@dataclass(frozen=True)
class PriceEntry:
    model_id: str
    input_per_million: Decimal
    output_per_million: Decimal

    def __post_init__(self):
        object.__setattr__(self, "input_per_million", Decimal(str(self.input_per_million)))
        object.__setattr__(self, "output_per_million", Decimal(str(self.output_per_million)))
        if self.input_per_million < 0 or self.output_per_million < 0:
            raise ValueError("prices must be >= 0")


# $/M tokens for the hosted general-purpose models
DEFAULT_PRICES: tuple[PriceEntry, ...] = (
    PriceEntry("gemini-3-pro-preview", "2.00", "12.00"),
    PriceEntry("gemini-3-flash-preview", "0.50", "3.00"),
    PriceEntry("gpt-5.2", "1.75", "14.00"),
    PriceEntry("deepseek-chat", "0.55", "1.70"),
    PriceEntry("deepseek-reasoner", "0.55", "1.70"),
    PriceEntry("qwen-max", "0.46", "1.84"),
    PriceEntry("claude-sonnet-4-5", "3.00", "15.00"),
)

_MILLION = Decimal(1_000_000)


def price_table(prices: Union[Iterable[PriceEntry], Mapping[str, PriceEntry]]) -> dict[str, PriceEntry]:
    if isinstance(prices, Mapping):
        return dict(prices)
    return {p.model_id: p for p in prices}


def accrue_cost(
    usage: Iterable[UsageRecord],
    prices: Union[Iterable[PriceEntry], Mapping[str, PriceEntry]],
) -> Decimal:
    """Exact dollar cost of `usage` under `prices`.

    The result is exact (decimal arithmetic with ample precision); use
    :func:`format_money` to render it.
    """
    table = price_table(prices)
    total = Decimal(0)
    with localcontext() as ctx:
        ctx.prec = 80
        for rec in usage:
            try:
                entry = table[rec.model_id]
            except KeyError:
                raise UnknownModel(rec.model_id) from None
            total += rec.prompt_tokens * entry.input_per_million / _MILLION
            total += rec.completion_tokens * entry.output_per_million / _MILLION
    return total


def format_money(amount: Decimal, places: int = 4) -> str:
    q = Decimal(1).scaleb(-places)
    return f"${amount.quantize(q, rounding=ROUND_HALF_UP)}"
