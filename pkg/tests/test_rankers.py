from __future__ import annotations

import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from poolrank.errors import BackendError, MissingFixture, ParseFailure
from poolrank.rankers import (
    FixtureStore,
    MMRConfig,
    PROMPT_TEMPLATE,
    Ranking,
    RelevanceScores,
    bm25_rank,
    bm25_scores,
    build_prompt,
    llm_rank,
    mmr_order,
    mmr_rank,
    parse_ranking_response,
    random_rank,
    rank_pools_llm,
    replay_rank,
)

from conftest import make_pool

# hand corpus for the Okapi oracle; expected scores were computed by direct
# arithmetic of the formula (k1=1.5, b=0.75, idf floor 0.25*avg) before the
# implementation existed
BM25_DOCS = [
    ["fire", "broke", "out", "fire"],
    ["two", "people", "died"],
    ["fire", "department", "responded", "quickly", "today"],
]
BM25_QUERY = frozenset({"died", "fire"})
BM25_EXPECTED = [0.14595017821885445, 0.5755781676236514, 0.09183382000287471]


class TestBM25:
    def test_scores_match_hand_computed_okapi_values(self):
        scores = bm25_scores(BM25_QUERY, BM25_DOCS)
        assert scores == pytest.approx(BM25_EXPECTED, abs=1e-12)

    def test_negative_idf_is_floored_not_negative_scoring(self):
        # "fire" sits in 2 of 3 docs: raw idf is negative, floored positive
        scores = bm25_scores(frozenset({"fire"}), BM25_DOCS)
        assert all(s >= 0 for s in scores)
        assert scores[0] > 0 and scores[2] > 0 and scores[1] == 0

    def test_unique_match_ranks_first(self):
        docs = [["alpha", "beta"], ["gamma", "delta"], ["epsilon", "zeta"]] + [["pad"]] * 5
        ranking, _ = bm25_rank("c", frozenset({"gamma"}), docs)
        assert ranking.ranked_indices[0] == 1

    def test_empty_query_yields_identity_order(self):
        docs = [[f"w{i}"] for i in range(8)]
        ranking, scores = bm25_rank("c", frozenset(), docs)
        assert ranking.ranked_indices == list(range(8))
        assert scores.scores == [0.0] * 8

    def test_all_empty_documents_score_zero(self):
        ranking, scores = bm25_rank("c", frozenset({"fire"}), [[] for _ in range(8)])
        assert scores.scores == [0.0] * 8
        assert ranking.ranked_indices == list(range(8))

    def test_deterministic_across_calls(self):
        docs = [[f"tok{i}", "shared", "shared"] for i in range(8)]
        query = frozenset({"shared", "tok3", "tok5"})
        assert bm25_scores(query, docs) == bm25_scores(query, docs)


class TestMMR:
    def test_hand_fixture_prefers_distinct_runner_up(self):
        # A and B identical, C distinct with mid relevance: greedy picks A, C, B
        sets = [frozenset({"x", "y"}), frozenset({"x", "y"}), frozenset({"z"})]
        assert mmr_order([1.0, 0.9, 0.96], sets, lam=0.7) == [0, 2, 1]

    def test_lambda_one_reduces_to_relevance_order(self):
        sets = [frozenset({"x", "y"}), frozenset({"x", "y"}), frozenset({"z"})]
        assert mmr_order([1.0, 0.9, 0.96], sets, lam=1.0) == [0, 2, 1]

    def test_disjoint_token_sets_follow_relevance_for_any_positive_lambda(self):
        # at lambda=0 the relevance term vanishes too, so everything ties
        sets = [frozenset({f"t{i}"}) for i in range(8)]
        relevance = [0.1, 0.9, 0.3, 0.8, 0.2, 0.7, 0.4, 0.6]
        expected = sorted(range(8), key=lambda i: (-relevance[i], i))
        for lam in (0.1, 0.3, 0.7, 1.0):
            assert mmr_order(relevance, sets, lam) == expected

    def test_lambda_zero_with_disjoint_sets_degenerates_to_index_order(self):
        sets = [frozenset({f"t{i}"}) for i in range(8)]
        assert mmr_order([0.1, 0.9, 0.3, 0.8, 0.2, 0.7, 0.4, 0.6], sets, lam=0.0) == list(range(8))

    def test_constant_relevance_normalizes_to_half(self):
        sets = [frozenset({f"t{i}"}) for i in range(4)]
        assert mmr_order([2.5] * 4, sets, lam=1.0) == [0, 1, 2, 3]

    @given(
        st.lists(
            st.frozensets(st.sampled_from("abcdefghij"), max_size=6), min_size=8, max_size=8
        ),
        st.lists(st.floats(min_value=0, max_value=10), min_size=8, max_size=8),
    )
    def test_lambda_one_equals_bm25_order_property(self, sets, scores):
        order = mmr_order(scores, sets, lam=1.0)
        assert order == sorted(range(8), key=lambda i: (-scores[i], i))

    def test_mmr_rank_wraps_order(self):
        sets = [frozenset({f"t{i}"}) for i in range(8)]
        relevance = RelevanceScores([float(i) for i in range(8)])
        ranking = mmr_rank("c", relevance, sets, MMRConfig(lam=0.7))
        assert ranking.ranker_id == "mmr"
        assert ranking.ranked_indices == list(reversed(range(8)))

    def test_lambda_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            MMRConfig(lam=1.2)


class TestRandomRank:
    def test_deterministic_per_cluster_and_seed(self):
        assert random_rank("c9", 7).ranked_indices == random_rank("c9", 7).ranked_indices

    def test_is_a_permutation(self):
        assert sorted(random_rank("c9", 7).ranked_indices) == list(range(8))

    def test_varies_with_cluster_and_seed(self):
        perms = {
            tuple(random_rank(f"c{i}", seed).ranked_indices)
            for i in range(20)
            for seed in (1, 2)
        }
        assert len(perms) > 10


class TestPrompt:
    def test_contains_exact_template_lines(self):
        prompt = build_prompt(make_pool())
        assert "Rank ALL 8 documents from best to worst." in prompt.splitlines()
        assert 'Return ONLY strict JSON with exactly 8 unique indices:{"ranked_indices":[...]}' in prompt
        assert prompt.startswith(PROMPT_TEMPLATE)

    def test_documents_follow_presentation_order(self):
        order = [3, 1, 0, 2, 4, 7, 6, 5]
        pool = make_pool(texts=[f"text number {i}" for i in range(8)], presentation_order=order)
        prompt = build_prompt(pool)
        for position, doc_index in enumerate(order):
            assert f"[{position}] text number {doc_index}" in prompt

    def test_presentation_order_is_the_only_variable(self):
        pool_a = make_pool(presentation_order=list(range(8)))
        pool_b = make_pool(presentation_order=list(reversed(range(8))))
        a_lines = set(build_prompt(pool_a).splitlines())
        b_lines = set(build_prompt(pool_b).splitlines())
        a_docs = {line.split("] ", 1)[1] for line in a_lines if line.startswith("[")}
        b_docs = {line.split("] ", 1)[1] for line in b_lines if line.startswith("[")}
        assert a_docs == b_docs

    def test_byte_identical_for_same_pool(self):
        assert build_prompt(make_pool()) == build_prompt(make_pool())


class TestParseRankingResponse:
    def test_well_formed(self):
        assert parse_ranking_response('{"ranked_indices":[3,1,0,2,4,7,6,5]}') == [3, 1, 0, 2, 4, 7, 6, 5]

    def test_code_fenced(self):
        text = '```json\n{"ranked_indices":[0,1,2,3,4,5,6,7]}\n```'
        assert parse_ranking_response(text) == list(range(8))

    def test_surrounding_prose(self):
        text = 'Sure! Here you go: {"ranked_indices": [7,6,5,4,3,2,1,0]} Hope that helps.'
        assert parse_ranking_response(text) == [7, 6, 5, 4, 3, 2, 1, 0]

    def test_nested_object_is_found(self):
        text = '{"result": {"ranked_indices": [0,1,2,3,4,5,6,7]}}'
        assert parse_ranking_response(text) == list(range(8))

    @pytest.mark.parametrize(
        "bad",
        [
            '{"ranked_indices":[0,0,1,2,3,4,5,6]}',  # duplicate
            '{"ranked_indices":[0,1,2,3,4,5,6,8]}',  # out of range
            '{"ranked_indices":[0,1,2,3,4,5,6]}',  # short
            '{"ranked_indices":[0,1,2,3,4,5,6,7,7]}',  # long
            '{"ranked_indices":"01234567"}',  # wrong type
            '{"ranked_indices":[0,1,2,3,4,5,6,true]}',  # boolean is not an index
            '{"ranked_indices":[0.0,1,2,3,4,5,6,7]}',  # float is not an index
            "no json here",
            '{"other": [0,1,2,3,4,5,6,7]}',
        ],
    )
    def test_rejects_malformed(self, bad):
        with pytest.raises(ParseFailure):
            parse_ranking_response(bad)


class StubClient:
    def __init__(self, raw: str):
        self.raw = raw
        self.calls: list[tuple[str, str, float | None]] = []

    def rank(self, model, prompt, temperature):
        self.calls.append((model, prompt, temperature))
        return self.raw


class TestLLMRank:
    def test_positions_map_back_through_presentation_order(self):
        order = [3, 1, 0, 2, 4, 7, 6, 5]
        pool = make_pool(presentation_order=order)
        client = StubClient(json.dumps({"ranked_indices": [2, 0, 1, 3, 4, 5, 6, 7]}))
        ranking = llm_rank(client, "m", pool)
        # position p shows pool document order[p]
        assert ranking.ranked_indices == [order[p] for p in [2, 0, 1, 3, 4, 5, 6, 7]]
        assert ranking.ranker_id == "llm:m"
        assert not ranking.fallback_used

    def test_malformed_response_falls_back_to_presentation_order(self):
        order = [5, 2, 7, 0, 1, 3, 4, 6]
        pool = make_pool(presentation_order=order)
        client = StubClient("the model refuses to answer")
        ranking = llm_rank(client, "m", pool)
        assert ranking.fallback_used
        assert ranking.ranked_indices == order
        assert ranking.raw_response == "the model refuses to answer"

    def test_requests_temperature_zero_by_default(self):
        client = StubClient(json.dumps({"ranked_indices": list(range(8))}))
        llm_rank(client, "m", make_pool())
        assert client.calls[0][2] == 0.0

    def test_pooled_ranking_keyed_by_cluster_and_retries_throttling(self):
        pools = [make_pool(cluster_id=f"c{i}") for i in range(6)]
        attempts = {"n": 0}

        class Flaky:
            def rank(self, model, prompt, temperature):
                attempts["n"] += 1
                if attempts["n"] == 1:
                    raise BackendError(model, "throttled", retriable=True)
                return json.dumps({"ranked_indices": list(range(8))})

        naps = []
        rankings = rank_pools_llm(
            Flaky(), "m", pools, max_inflight=3, sleep=naps.append, backoff_base=0.25
        )
        assert [r.cluster_id for r in rankings] == [p.cluster_id for p in pools]
        assert naps == [0.25]

    def test_pooled_ranking_propagates_fatal_errors(self):
        class Dead:
            def rank(self, model, prompt, temperature):
                raise BackendError(model, "bad request", retriable=False)

        with pytest.raises(BackendError):
            rank_pools_llm(Dead(), "m", [make_pool()], sleep=lambda s: None)

    def test_records_raw_responses_as_fixtures(self, tmp_path):
        store = FixtureStore(tmp_path)
        client = StubClient(json.dumps({"ranked_indices": list(range(8))}))
        rank_pools_llm(client, "m", [make_pool(cluster_id="c3")], record_to=store)
        assert store.get("m", "c3") == client.raw


class TestReplayRank:
    def test_replay_is_deterministic_and_matches_pipeline(self, tmp_path):
        store = FixtureStore(tmp_path)
        pool = make_pool(cluster_id="c1", presentation_order=[1, 0, 3, 2, 5, 4, 7, 6])
        store.put("m", "c1", json.dumps({"ranked_indices": [1, 0, 2, 3, 4, 5, 6, 7]}))
        first = replay_rank(store, "m", pool)
        second = replay_rank(store, "m", pool)
        assert first == second
        assert first.ranker_id == "replay:m"
        assert first.ranked_indices[:2] == [0, 1]

    def test_missing_fixture_names_model_and_cluster(self, tmp_path):
        with pytest.raises(MissingFixture) as err:
            replay_rank(FixtureStore(tmp_path), "m", make_pool(cluster_id="c9"))
        assert err.value.model == "m"
        assert err.value.cluster_id == "c9"


class TestRankingInvariants:
    def test_rejects_non_permutations(self):
        with pytest.raises(ValueError):
            Ranking("c", "bm25", [0, 1, 2, 3, 4, 5, 6, 6])
        with pytest.raises(ValueError):
            Ranking("c", "bm25", [0, 1, 2])

    def test_fallback_requires_raw_response(self):
        with pytest.raises(ValueError):
            Ranking("c", "llm:m", list(range(8)), fallback_used=True)

    @given(st.permutations(list(range(8))))
    def test_inverse_mapping_recovers_positions(self, positions):
        order = [3, 1, 0, 2, 4, 7, 6, 5]
        pool = make_pool(presentation_order=order)
        client = StubClient(json.dumps({"ranked_indices": list(positions)}))
        ranking = llm_rank(client, "m", pool)
        inverse = {doc: pos for pos, doc in enumerate(order)}
        assert [inverse[doc] for doc in ranking.ranked_indices] == list(positions)
