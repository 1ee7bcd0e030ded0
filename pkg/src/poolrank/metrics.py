"""Selection metrics over top-K sets and agreement measures between rankings.

Lexical metrics work on content-token sets; semantic metrics on
L2-normalized embeddings, where cosine similarity is the plain dot product.
Pair sums iterate in sorted index order so values are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import POOL_SIZE
from .embeddings import EmbeddingVector
from .errors import (
    BudgetOutOfRange,
    BudgetTooSmall,
    LengthMismatch,
    NoSummarySentences,
)
from .rankers import Ranking
from .textproc import jaccard


@dataclass
class Selection:
    cluster_id: str
    ranker_id: str
    k: int
    indices: frozenset[int]


@dataclass
class SelectionMetrics:
    coverage: float
    redundancy: float
    summary_recall: float
    sem_redundancy: float
    sem_coverage: float


@dataclass
class AgreementStats:
    kendall_tau: float
    topk_jaccard: float


def select_top_k(ranking: Ranking, k: int) -> Selection:
    """Unordered set of the k highest-ranked pool indices."""
    if not 1 <= k <= POOL_SIZE:
        raise BudgetOutOfRange(f"k={k} outside [1, {POOL_SIZE}]")
    return Selection(
        cluster_id=ranking.cluster_id,
        ranker_id=ranking.ranker_id,
        k=k,
        indices=frozenset(ranking.ranked_indices[:k]),
    )


def coverage(selection_token_sets: Sequence[frozenset[str]], query_tokens: frozenset[str]) -> float:
    """Fraction of query content tokens present in the selected documents' union."""
    if not query_tokens:
        return 0.0
    union: frozenset[str] = frozenset().union(*selection_token_sets) if selection_token_sets else frozenset()
    return len(union & query_tokens) / len(query_tokens)


def redundancy(selection_token_sets: Sequence[frozenset[str]]) -> float:
    """Mean pairwise Jaccard similarity over all unordered selection pairs."""
    k = len(selection_token_sets)
    if k < 2:
        raise BudgetTooSmall(f"redundancy needs k >= 2, got {k}")
    total = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            total += jaccard(selection_token_sets[i], selection_token_sets[j])
    return total / (k * (k - 1) // 2)


def summary_recall(selection_token_sets: Sequence[frozenset[str]], summary_tokens: frozenset[str]) -> float:
    """Fraction of reference-summary content tokens covered by the selection."""
    if not summary_tokens:
        return 0.0
    union: frozenset[str] = frozenset().union(*selection_token_sets) if selection_token_sets else frozenset()
    return len(union & summary_tokens) / len(summary_tokens)


def sem_redundancy(selection_embeddings: Sequence[EmbeddingVector]) -> float:
    """Mean pairwise dot product over all unordered selection pairs."""
    k = len(selection_embeddings)
    if k < 2:
        raise BudgetTooSmall(f"sem_redundancy needs k >= 2, got {k}")
    total = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            total += float(np.dot(selection_embeddings[i].values, selection_embeddings[j].values))
    return total / (k * (k - 1) // 2)


def sem_coverage(
    summary_sentence_embeddings: Sequence[EmbeddingVector],
    selection_embeddings: Sequence[EmbeddingVector],
) -> float:
    """Mean over summary sentences of the best similarity to any selected document."""
    if not summary_sentence_embeddings:
        raise NoSummarySentences("sem_coverage needs at least one summary sentence")
    if not selection_embeddings:
        raise BudgetOutOfRange("sem_coverage needs at least one selected document")
    total = 0.0
    for sent in summary_sentence_embeddings:
        total += max(float(np.dot(sent.values, doc.values)) for doc in selection_embeddings)
    return total / len(summary_sentence_embeddings)


def kendall_tau(a: Sequence[int], b: Sequence[int]) -> float:
    """(concordant - discordant) / C(n,2) by direct pair enumeration.

    Both arguments are ranked index lists (strict total orders over the same
    indices), so no tie correction arises.
    """
    if len(a) != len(b) or set(a) != set(b):
        raise LengthMismatch(f"rankings cover different index sets: {a!r} vs {b!r}")
    n = len(a)
    if n < 2:
        raise LengthMismatch("kendall_tau needs at least two items")
    pos_a = {doc: r for r, doc in enumerate(a)}
    pos_b = {doc: r for r, doc in enumerate(b)}
    items = sorted(pos_a)
    concordant = discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            d_a = pos_a[items[i]] - pos_a[items[j]]
            d_b = pos_b[items[i]] - pos_b[items[j]]
            if d_a * d_b > 0:
                concordant += 1
            else:
                discordant += 1
    return (concordant - discordant) / (n * (n - 1) // 2)


def topk_jaccard(a: Sequence[int], b: Sequence[int], k: int) -> float:
    """Jaccard similarity of the two top-k index sets."""
    if not 1 <= k <= min(len(a), len(b)):
        raise BudgetOutOfRange(f"k={k} outside [1, {min(len(a), len(b))}]")
    sa, sb = frozenset(a[:k]), frozenset(b[:k])
    return len(sa & sb) / len(sa | sb)


def agreement(a: Ranking, b: Ranking, k: int) -> AgreementStats:
    return AgreementStats(
        kendall_tau=kendall_tau(a.ranked_indices, b.ranked_indices),
        topk_jaccard=topk_jaccard(a.ranked_indices, b.ranked_indices, k),
    )
