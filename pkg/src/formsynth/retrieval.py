"""Premise retrieval: model-written queries, index search, model-side filtering."""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Protocol, Sequence, Union

import httpx

from .core import CallKind, Phase, Premise, PremiseKind
from .errors import EmptyCompletion, NoQueriesParsed, SearchUnavailable, SelectionParseError, TransportError
from .gateway import ChatRequest, Gateway, UsageLedger
from .parsing import parse_numbered_list
from .prompts import Templates

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Query:
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("query text must be non-empty")


@dataclass(frozen=True)
class SearchResult:
    query: Query
    hits: tuple[Premise, ...] = ()
    error: Optional[str] = None  # set when the index was unavailable

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"query": self.query.text, "hits": [p.to_dict() for p in self.hits]}
        if self.error is not None:
            d["error"] = self.error
        return d


@dataclass(frozen=True)
class RetrievalOutcome:
    queries: tuple[Query, ...] = ()
    selected: tuple[Premise, ...] = ()
    unselected: tuple[Premise, ...] = ()

    def __post_init__(self):
        overlap = {p.name for p in self.selected} & {p.name for p in self.unselected}
        if overlap:
            raise ValueError(f"premises both selected and unselected: {sorted(overlap)}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "queries": [q.text for q in self.queries],
            "selected": [p.to_dict() for p in self.selected],
            "unselected": [p.to_dict() for p in self.unselected],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RetrievalOutcome":
        return cls(
            tuple(Query(q) for q in d.get("queries", ())),
            tuple(Premise.from_dict(p) for p in d.get("selected", ())),
            tuple(Premise.from_dict(p) for p in d.get("unselected", ())),
        )


EMPTY_OUTCOME = RetrievalOutcome()


# -- indexes -----------------------------------------------------------------


class PremiseIndex(Protocol):
    def search(self, query: Query, top_k: int = 5) -> SearchResult: ...


STOPWORDS = frozenset({"of", "the", "a", "an", "in", "for", "to", "and", "is", "on", "with"})
_CAMEL = re.compile(r"[A-Z]+(?![a-z])|[A-Z]?[a-z]+|\d+")


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens; splits on punctuation, `.`/`_` and camelCase."""
    out = []
    for chunk in re.split(r"[^0-9A-Za-z]+", text):
        for tok in _CAMEL.findall(chunk):
            tok = tok.lower()
            if tok not in STOPWORDS:
                out.append(tok)
    return out


def _tokens_match(a: str, b: str) -> bool:
    if a == b:
        return True
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    return len(short) >= 3 and long_.startswith(short)


class MockIndex:
    """Token-overlap search over a fixed premise list.

    A premise scores one point per distinct query token that equals, or
    shares a prefix of at least three characters with, a token of its name.
    Zero-score premises are never returned; ties go to the smaller name.
    """

    def __init__(self, premises: Iterable[Premise]):
        self.premises = list(premises)
        self._name_tokens = [set(tokenize(p.name)) for p in self.premises]

    @classmethod
    def from_jsonl(cls, path: Union[str, Path]) -> "MockIndex":
        with open(path, encoding="utf-8") as fh:
            return cls(_read_premises(fh))

    @classmethod
    def bundled(cls) -> "MockIndex":
        text = resources.files("formsynth").joinpath("data/premises.jsonl").read_text(encoding="utf-8")
        return cls(_read_premises(text.splitlines()))

    def score(self, query: Query, i: int) -> int:
        names = self._name_tokens[i]
        return sum(1 for q in set(tokenize(query.text)) if any(_tokens_match(q, n) for n in names))

    def search(self, query: Query, top_k: int = 5) -> SearchResult:
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        scored = [(self.score(query, i), p) for i, p in enumerate(self.premises)]
        ranked = sorted((sp for sp in scored if sp[0] > 0), key=lambda sp: (-sp[0], sp[1].name))
        return SearchResult(query, tuple(p for _, p in ranked[:top_k]))


def _read_premises(lines: Iterable[str]) -> list[Premise]:
    return [Premise.from_dict(json.loads(line)) for line in lines if line.strip()]


class HttpIndex:
    """Client for a remote premise search service.

    Sends ``GET {endpoint}?query=...&limit=k`` and accepts either a JSON list
    of results or an object with a ``results`` list. Each result needs a
    ``name``; ``signature`` and ``kind`` are optional.
    """

    def __init__(self, endpoint: str, api_key: Optional[str] = None, timeout: float = 30.0,
                 client: Optional[httpx.Client] = None):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout
        self.client = client or httpx.Client(timeout=timeout)

    def search(self, query: Query, top_k: int = 5) -> SearchResult:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = self.client.get(self.endpoint, params={"query": query.text, "limit": top_k}, headers=headers)
            resp.raise_for_status()
            body = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise SearchUnavailable(str(exc)) from exc
        items = body.get("results", []) if isinstance(body, dict) else body
        hits = []
        for item in items[:top_k]:
            name = item.get("name") if isinstance(item, dict) else None
            if not name:
                continue
            kind = item.get("kind", "theorem")
            hits.append(Premise(name, item.get("signature", ""),
                                PremiseKind.DEFINITION if kind == "definition" else PremiseKind.THEOREM))
        return SearchResult(query, tuple(hits))


def search_all(index: PremiseIndex, queries: Sequence[Query], top_k: int = 5, max_workers: int = 4) -> list[SearchResult]:
    """Run every query; an unavailable index yields empty hits with ``error`` set."""

    def one(q: Query) -> SearchResult:
        try:
            return index.search(q, top_k)
        except SearchUnavailable as exc:
            log.warning("search unavailable for %r: %s", q.text, exc)
            return SearchResult(q, (), str(exc))

    if len(queries) <= 1 or max_workers <= 1:
        return [one(q) for q in queries]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(one, queries))


# -- model-side steps --------------------------------------------------------


def parse_queries(output: str, k_query: int) -> list[Query]:
    if k_query < 1:
        raise ValueError("k_query must be >= 1")
    seen: set[str] = set()
    queries = []
    for item in parse_numbered_list(output):
        if item not in seen:
            seen.add(item)
            queries.append(Query(item))
    if not queries:
        raise NoQueriesParsed("no queries found in model output")
    return queries[:k_query]


def generate_queries(gateway: Gateway, templates: Templates, statement_text: str, k_query: int = 5, *,
                     target: str = "theorems", phase: Phase = Phase.THEOREM_RETRIEVAL,
                     ledger: Optional[UsageLedger] = None) -> list[Query]:
    """One general-model call; up to `k_query` distinct queries in output order."""
    if not statement_text.strip():
        raise ValueError("statement must be non-empty")
    prompt = templates.render("queries", statement=statement_text, k_query=k_query,
                              target=target, target_singular=target.rstrip("s"))
    resp = gateway.complete(ChatRequest(CallKind.GENERAL, prompt, phase=phase, purpose="queries"), ledger)
    return parse_queries(resp.text, k_query)


def union_hits(results: Iterable[SearchResult]) -> list[Premise]:
    seen: dict[str, Premise] = {}
    for r in results:
        for p in r.hits:
            seen.setdefault(p.name, p)
    return list(seen.values())


def parse_selection(output: str) -> list[str]:
    """Names listed in a selection reply; ``none`` means an explicit empty choice."""
    names = []
    for item in parse_numbered_list(output):
        name = item.split(" : ", 1)[0].strip().strip("`").strip()
        if name and name.lower() != "none":
            names.append(name)
    if not names and not re.search(r"\bnone\b", output, re.IGNORECASE):
        raise SelectionParseError("no premise names found in selection output")
    return names


def partition(queries: Sequence[Query], hits: Sequence[Premise], chosen: Iterable[str]) -> RetrievalOutcome:
    """Split `hits` by `chosen` names; names outside the hits are dropped."""
    wanted = set(chosen)
    selected = tuple(p for p in hits if p.name in wanted)
    unselected = tuple(p for p in hits if p.name not in wanted)
    return RetrievalOutcome(tuple(queries), selected, unselected)


def select_premises(gateway: Gateway, templates: Templates, statement_text: str, results: Sequence[SearchResult], *,
                    phase: Phase = Phase.THEOREM_RETRIEVAL, ledger: Optional[UsageLedger] = None) -> RetrievalOutcome:
    queries = [r.query for r in results]
    hits = union_hits(results)
    if not hits:
        return RetrievalOutcome(tuple(queries))
    prompt = templates.render("premise_selection", statement=statement_text,
                              queries=[q.text for q in queries], candidates=[p.render() for p in hits])
    try:
        resp = gateway.complete(ChatRequest(CallKind.GENERAL, prompt, phase=phase, purpose="premise_selection"), ledger)
        chosen = parse_selection(resp.text)
    except (SelectionParseError, TransportError, EmptyCompletion) as exc:
        log.info("premise selection unusable (%s); keeping none", exc)
        chosen = []
    return partition(queries, hits, chosen)


__all__ = [
    "EMPTY_OUTCOME", "HttpIndex", "MockIndex", "PremiseIndex", "Query", "RetrievalOutcome", "SearchResult",
    "generate_queries", "parse_queries", "parse_selection", "partition", "search_all",
    "select_premises", "tokenize", "union_hits",
]
