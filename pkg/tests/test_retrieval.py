import json

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from formsynth.core import CallKind, Premise, PremiseKind
from formsynth.errors import NoQueriesParsed, SearchUnavailable, SelectionParseError
from formsynth.gateway import Gateway, MockRule, MockScript, ScriptedBackend
from formsynth.prompts import Templates
from formsynth.retrieval import (
    HttpIndex,
    MockIndex,
    Query,
    RetrievalOutcome,
    SearchResult,
    generate_queries,
    parse_queries,
    parse_selection,
    partition,
    search_all,
    select_premises,
    tokenize,
    union_hits,
)

ADD = Premise("Nat.add_comm", "∀ (n m : ℕ), n + m = m + n")
MUL = Premise("Nat.mul_comm", "∀ (n m : ℕ), n * m = m * n")
ASSOC = Premise("Nat.add_assoc", "∀ (n m k : ℕ), n + m + k = n + (m + k)")
PRIME = Premise("Nat.Prime", "ℕ → Prop", PremiseKind.DEFINITION)


def general(*rules):
    script = MockScript(rules)
    return Gateway({CallKind.GENERAL: ScriptedBackend("general", script)}), script


def test_tokenize_splits_namespaces_snake_and_camel_case():
    assert tokenize("Nat.add_comm") == ["nat", "add", "comm"]
    assert tokenize("Finset.sum_range_succ") == ["finset", "sum", "range", "succ"]
    assert tokenize("commutativity of the ZMod addition") == ["commutativity", "z", "mod", "addition"]


def test_mock_index_ranks_by_overlap_then_name():
    index = MockIndex([MUL, ADD, ASSOC, PRIME])
    hits = index.search(Query("addition is commutative")).hits
    # "addition"~"add" and "commutative"~"comm" both hit add_comm; assoc only gets "add"
    assert [p.name for p in hits] == ["Nat.add_comm", "Nat.add_assoc", "Nat.mul_comm"]
    assert index.search(Query("zeta function")).hits == ()
    assert len(index.search(Query("nat"), top_k=2).hits) == 2
    with pytest.raises(ValueError):
        index.search(Query("nat"), top_k=0)


def test_bundled_index_finds_library_names():
    index = MockIndex.bundled()
    assert len(index.premises) > 100
    assert "Nat.add_comm" in [p.name for p in index.search(Query("add comm nat")).hits]


def test_query_must_be_non_empty():
    with pytest.raises(ValueError):
        Query("  ")


def test_parse_queries_dedupes_and_caps():
    out = "1. add comm\n2. mul comm\n3. add comm\n4. prime def\n"
    assert [q.text for q in parse_queries(out, 2)] == ["add comm", "mul comm"]
    assert [q.text for q in parse_queries(out, 5)] == ["add comm", "mul comm", "prime def"]
    with pytest.raises(NoQueriesParsed):
        parse_queries("no list here", 3)
    with pytest.raises(ValueError):
        parse_queries(out, 0)


@given(st.lists(st.sampled_from(["a b", "c d", "e f", "g h"]), min_size=1, max_size=12), st.integers(1, 6))
def test_parse_queries_are_distinct_and_bounded(items, k):
    out = "".join(f"{i + 1}. {t}\n" for i, t in enumerate(items))
    texts = [q.text for q in parse_queries(out, k)]
    assert len(texts) == len(set(texts)) <= k
    assert texts == list(dict.fromkeys(items))[:k]


def test_generate_queries_is_one_general_call():
    gw, _ = general(MockRule(None, "1. add comm\n2. mul comm"))
    queries = generate_queries(gw, Templates(), "theorem t : 1 + 2 = 2 + 1 := by sorry", 5)
    assert [q.text for q in queries] == ["add comm", "mul comm"]
    assert gw.general_calls == 1
    with pytest.raises(ValueError):
        generate_queries(gw, Templates(), " ", 5)


def test_parse_selection_reads_names_and_explicit_none():
    assert parse_selection("1. `Nat.add_comm` : ∀ n m\n2. Nat.mul_comm") == ["Nat.add_comm", "Nat.mul_comm"]
    assert parse_selection("None of these help.") == []
    assert parse_selection("1. none") == []
    with pytest.raises(SelectionParseError):
        parse_selection("I am not sure.")


def test_partition_drops_unknown_names_and_keeps_disjoint_sets():
    out = partition([Query("q")], [ADD, MUL], ["Nat.mul_comm", "Nat.made_up"])
    assert out.selected == (MUL,)
    assert out.unselected == (ADD,)
    with pytest.raises(ValueError):
        RetrievalOutcome((), (ADD,), (ADD,))


def test_union_hits_keeps_first_occurrence_order():
    results = [SearchResult(Query("a"), (ADD, MUL)), SearchResult(Query("b"), (MUL, PRIME))]
    assert union_hits(results) == [ADD, MUL, PRIME]


def test_select_premises_skips_the_call_without_hits():
    gw, _ = general()
    out = select_premises(gw, Templates(), "stmt", [SearchResult(Query("q"))])
    assert out == RetrievalOutcome((Query("q"),))
    assert gw.general_calls == 0


def test_select_premises_prompt_lists_statement_queries_and_candidates():
    seen = []
    gw, _ = general(MockRule(None, "1. Nat.add_comm"))
    original = gw.complete

    def spy(request, ledger=None):
        seen.append(request.prompt)
        return original(request, ledger)

    gw.complete = spy
    out = select_premises(gw, Templates(), "theorem t : 1 + 2 = 2 + 1", [SearchResult(Query("add comm"), (ADD, MUL))])
    assert out.selected == (ADD,) and out.unselected == (MUL,)
    assert "theorem t : 1 + 2 = 2 + 1" in seen[0]
    assert "add comm" in seen[0]
    assert "Nat.mul_comm" in seen[0]


@pytest.mark.parametrize("rule", [MockRule(None, "I cannot tell."), MockRule(None, error="transport"),
                                  MockRule(None, "  ")])
def test_unusable_selection_keeps_every_hit_unselected(rule):
    gw, _ = general(rule)
    out = select_premises(gw, Templates(), "stmt", [SearchResult(Query("q"), (ADD, MUL))])
    assert out.selected == ()
    assert out.unselected == (ADD, MUL)


def _http_index(handler, **kw):
    return HttpIndex("http://search.test/api", client=httpx.Client(transport=httpx.MockTransport(handler)), **kw)


def test_http_index_parses_both_body_shapes_and_sends_params():
    calls = []

    def handler(request):
        calls.append(request)
        body = {"results": [{"name": "Nat.Prime", "kind": "definition", "signature": "ℕ → Prop"}, {"signature": "x"}]}
        return httpx.Response(200, json=body)

    index = _http_index(handler, api_key="k")
    hits = index.search(Query("prime numbers"), top_k=3).hits
    assert hits == (PRIME,)
    assert calls[0].url.params["query"] == "prime numbers"
    assert calls[0].url.params["limit"] == "3"
    assert calls[0].headers["authorization"] == "Bearer k"

    bare = _http_index(lambda r: httpx.Response(200, json=[{"name": "Nat.add_comm"}, {"name": "Nat.mul_comm"}]))
    assert [p.name for p in bare.search(Query("q"), top_k=1).hits] == ["Nat.add_comm"]


@pytest.mark.parametrize("response", [httpx.Response(503), httpx.Response(200, content=b"not json")])
def test_http_index_failures_become_search_unavailable(response):
    with pytest.raises(SearchUnavailable):
        _http_index(lambda r: response).search(Query("q"))


def test_search_all_records_errors_and_keeps_order():
    class Flaky:
        def search(self, query, top_k=5):
            if query.text == "down":
                raise SearchUnavailable("offline")
            return SearchResult(query, (ADD,))

    queries = [Query("up"), Query("down"), Query("again")]
    for workers in (1, 3):
        results = search_all(Flaky(), queries, max_workers=workers)
        assert [r.query.text for r in results] == ["up", "down", "again"]
        assert [r.error for r in results] == [None, "offline", None]
        assert results[1].hits == ()


def test_outcome_round_trip():
    out = RetrievalOutcome((Query("q"),), (ADD,), (PRIME,))
    assert RetrievalOutcome.from_dict(json.loads(json.dumps(out.to_dict()))) == out
