from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given
from hypothesis import strategies as st

from poolrank.errors import (
    BudgetOutOfRange,
    BudgetTooSmall,
    LengthMismatch,
    NoSummarySentences,
)
from poolrank.metrics import (
    coverage,
    kendall_tau,
    redundancy,
    select_top_k,
    sem_coverage,
    sem_redundancy,
    summary_recall,
    topk_jaccard,
)
from poolrank.rankers import Ranking

from conftest import seeded_unit_vector, unit_vector

permutations8 = st.permutations(list(range(8)))


class TestSelectTopK:
    def test_prefix_as_set(self):
        r = Ranking("c", "bm25", [3, 1, 0, 2, 4, 7, 6, 5])
        assert select_top_k(r, 3).indices == {3, 1, 0}

    def test_full_pool(self):
        r = Ranking("c", "bm25", list(range(8)))
        assert select_top_k(r, 8).indices == set(range(8))

    @pytest.mark.parametrize("k", [0, 9, -1])
    def test_budget_out_of_range(self, k):
        r = Ranking("c", "bm25", list(range(8)))
        with pytest.raises(BudgetOutOfRange):
            select_top_k(r, k)


class TestLexicalMetrics:
    def test_coverage_half(self):
        sets = [frozenset({"a"}), frozenset({"b", "zz"})]
        assert coverage(sets, frozenset({"a", "b", "c", "d"})) == 0.5

    def test_coverage_full_containment(self):
        sets = [frozenset({"a", "b", "c"})]
        assert coverage(sets, frozenset({"a", "b"})) == 1.0

    def test_coverage_empty_query_convention(self):
        assert coverage([frozenset({"a"})], frozenset()) == 0.0

    def test_redundancy_identical_sets(self):
        sets = [frozenset({"x", "y"})] * 4
        assert redundancy(sets) == 1.0

    def test_redundancy_disjoint_sets(self):
        sets = [frozenset({f"t{i}"}) for i in range(4)]
        assert redundancy(sets) == 0.0

    def test_redundancy_hand_mean(self):
        # pairwise jaccards (0.5, 0, 0) -> mean 1/6
        sets = [frozenset({"a", "b"}), frozenset({"a", "b", "c", "d"}), frozenset({"z"})]
        assert redundancy(sets) == pytest.approx(1 / 6, abs=1e-12)

    def test_redundancy_needs_two(self):
        with pytest.raises(BudgetTooSmall):
            redundancy([frozenset({"a"})])

    def test_summary_recall_hand_count(self):
        summary = frozenset(f"w{i}" for i in range(10))
        sets = [frozenset(f"w{i}" for i in range(7))]
        assert summary_recall(sets, summary) == 0.7

    def test_summary_recall_extremes(self):
        assert summary_recall([frozenset({"a"})], frozenset({"a"})) == 1.0
        assert summary_recall([frozenset({"b"})], frozenset({"a"})) == 0.0
        assert summary_recall([frozenset({"b"})], frozenset()) == 0.0

    @given(st.lists(st.frozensets(st.sampled_from("abcdef"), min_size=1, max_size=4), min_size=2, max_size=6))
    def test_redundancy_is_order_invariant(self, sets):
        assert redundancy(sets) == pytest.approx(redundancy(list(reversed(sets))), abs=1e-12)

    @given(
        permutations8,
        st.lists(st.frozensets(st.sampled_from("abcdefgh"), max_size=5), min_size=8, max_size=8),
        st.frozensets(st.sampled_from("abcdefgh"), min_size=1, max_size=6),
    )
    def test_coverage_monotone_in_k_for_nested_selections(self, order, doc_sets, query):
        r = Ranking("c", "bm25", list(order))
        values = []
        for k in range(1, 9):
            sel = sorted(select_top_k(r, k).indices)
            values.append(coverage([doc_sets[i] for i in sel], query))
        assert all(a <= b + 1e-15 for a, b in zip(values, values[1:]))


class TestSemanticMetrics:
    def test_sem_redundancy_identical_vectors(self):
        vec = unit_vector([1.0, 0.0, 0.0])
        assert sem_redundancy([vec] * 3) == pytest.approx(1.0, abs=1e-12)

    def test_sem_redundancy_orthogonal_vectors(self):
        vecs = [unit_vector([1, 0, 0]), unit_vector([0, 1, 0]), unit_vector([0, 0, 1])]
        assert sem_redundancy(vecs) == 0.0

    def test_sem_redundancy_sixty_degrees(self):
        vecs = [unit_vector([1.0, 0.0]), unit_vector([0.5, math.sqrt(3) / 2])]
        assert sem_redundancy(vecs) == pytest.approx(0.5, abs=1e-12)

    def test_sem_redundancy_needs_two(self):
        with pytest.raises(BudgetTooSmall):
            sem_redundancy([unit_vector([1.0, 0.0])])

    def test_sem_coverage_exact_matches(self):
        docs = [seeded_unit_vector(f"d{i}") for i in range(3)]
        assert sem_coverage(list(docs), docs) == pytest.approx(1.0, abs=1e-12)

    def test_sem_coverage_takes_max_then_mean(self):
        sent = unit_vector([1.0, 0.0, 0.0])
        docs = [
            unit_vector([0.2, math.sqrt(1 - 0.04), 0.0]),
            unit_vector([0.9, 0.0, math.sqrt(1 - 0.81)]),
            unit_vector([0.4, 0.0, math.sqrt(1 - 0.16)]),
        ]
        assert sem_coverage([sent], docs) == pytest.approx(0.9, abs=1e-12)

    def test_sem_coverage_averages_across_sentences(self):
        docs = [unit_vector([1.0, 0.0]), unit_vector([0.0, 1.0])]
        sentences = [unit_vector([0.8, 0.6]), unit_vector([0.6, 0.8])]
        assert sem_coverage(sentences, docs) == pytest.approx(0.8, abs=1e-12)

    def test_sem_coverage_requires_sentences(self):
        with pytest.raises(NoSummarySentences):
            sem_coverage([], [unit_vector([1.0, 0.0])])

    @given(st.integers(min_value=2, max_value=6), st.integers(min_value=0, max_value=10_000))
    def test_semantic_metrics_bounded_for_unit_vectors(self, k, salt):
        docs = [seeded_unit_vector(f"{salt}-d{i}") for i in range(k)]
        sentences = [seeded_unit_vector(f"{salt}-s{i}") for i in range(2)]
        assert -1.0 - 1e-9 <= sem_redundancy(docs) <= 1.0 + 1e-9
        assert -1.0 - 1e-9 <= sem_coverage(sentences, docs) <= 1.0 + 1e-9


def brute_force_tau(a, b):
    """Independent oracle: enumerate every unordered pair of items."""
    items = list(a)
    n = len(items)
    rank_a = {doc: a.index(doc) for doc in items}
    rank_b = {doc: b.index(doc) for doc in items}
    concordant = discordant = 0
    for x in range(n):
        for y in range(x + 1, n):
            i, j = items[x], items[y]
            agree = (rank_a[i] < rank_a[j]) == (rank_b[i] < rank_b[j])
            if agree:
                concordant += 1
            else:
                discordant += 1
    return (concordant - discordant) / (n * (n - 1) / 2)


class TestKendallTau:
    def test_identical(self):
        assert kendall_tau([3, 1, 0, 2, 4, 7, 6, 5], [3, 1, 0, 2, 4, 7, 6, 5]) == 1.0

    def test_reversal(self):
        a = list(range(8))
        assert kendall_tau(a, list(reversed(a))) == -1.0

    def test_adjacent_transposition(self):
        a = list(range(8))
        b = [1, 0] + list(range(2, 8))
        assert kendall_tau(a, b) == pytest.approx(26 / 28, abs=0)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            kendall_tau([0, 1, 2], [0, 1, 2, 3])
        with pytest.raises(LengthMismatch):
            kendall_tau([0, 1, 2], [0, 1, 9])

    @given(permutations8, permutations8)
    def test_matches_brute_force_oracle_exactly(self, a, b):
        assert kendall_tau(a, b) == brute_force_tau(a, b)

    @given(permutations8, permutations8)
    def test_symmetric(self, a, b):
        assert kendall_tau(a, b) == kendall_tau(b, a)

    @given(permutations8, permutations8)
    def test_matches_scipy(self, a, b):
        # scipy correlates rank vectors; convert orders to per-item ranks
        rank_a = [a.index(i) for i in range(8)]
        rank_b = [b.index(i) for i in range(8)]
        expected = scipy.stats.kendalltau(rank_a, rank_b).statistic
        assert kendall_tau(a, b) == pytest.approx(expected, abs=1e-12)


class TestTopKJaccard:
    def test_identical_rankings(self):
        a = [3, 1, 0, 2, 4, 7, 6, 5]
        for k in range(1, 9):
            assert topk_jaccard(a, a, k) == 1.0

    def test_half_overlap(self):
        assert topk_jaccard([0, 1, 2, *range(3, 8)], [1, 2, 3, *[0, 4, 5, 6, 7]], 3) == 0.5

    def test_disjoint_top3(self):
        assert topk_jaccard([0, 1, 2, 3, 4, 5, 6, 7], [5, 6, 7, 0, 1, 2, 3, 4], 3) == 0.0

    def test_budget_out_of_range(self):
        with pytest.raises(BudgetOutOfRange):
            topk_jaccard(list(range(8)), list(range(8)), 0)

    @given(permutations8, permutations8, st.integers(min_value=1, max_value=8))
    def test_symmetric_and_bounded(self, a, b, k):
        assert topk_jaccard(a, b, k) == topk_jaccard(b, a, k)
        assert 0.0 <= topk_jaccard(a, b, k) <= 1.0
