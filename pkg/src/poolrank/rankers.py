"""Ranking policies over a fixed 8-document pool.

Four families: Okapi BM25 lexical matching, MMR greedy diversification on top
of BM25 relevance, a seeded random baseline, and LLM listwise ranking (live
through the gateway, or deterministic replay of recorded completions).

Every ranker returns a strict total order: a permutation of the pool indices
0..7, validated on construction. Ties anywhere are broken by ascending
document index so all rankings are total functions of their inputs.
"""

from __future__ import annotations

import json
import math
import re
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

from . import POOL_SIZE
from .corpus import EvidencePool
from .errors import BackendError, MissingFixture, ParseFailure
from .rng import hash64, keyed_permutation
from .textproc import jaccard

BM25_K1 = 1.5
BM25_B = 0.75
BM25_EPSILON = 0.25  # floor negative idf at epsilon * average idf

DEFAULT_MMR_LAMBDA = 0.7

BASELINE_RANKERS = ("bm25", "mmr", "random")

PROMPT_TEMPLATE = (
    "You are ranking evidence documents for a query.\n"
    "Task: You are given exactly 8 candidate documents.\n"
    "Rank ALL 8 documents from best to worst.\n"
    "Ranking goal: 1) Relevance to the query.\n"
    'Return ONLY strict JSON with exactly 8 unique indices:{"ranked_indices":[...]}'
)


@dataclass
class Ranking:
    cluster_id: str
    ranker_id: str
    ranked_indices: list[int]
    fallback_used: bool = False
    raw_response: str | None = None

    def __post_init__(self):
        if sorted(self.ranked_indices) != list(range(POOL_SIZE)):
            raise ValueError(
                f"{self.ranker_id}@{self.cluster_id}: ranked_indices "
                f"{self.ranked_indices} is not a permutation of 0..{POOL_SIZE - 1}"
            )
        if self.fallback_used and self.raw_response is None:
            raise ValueError("fallback_used requires raw_response")


@dataclass
class RelevanceScores:
    scores: list[float]

    def __post_init__(self):
        if len(self.scores) != POOL_SIZE:
            raise ValueError(f"expected {POOL_SIZE} scores, got {len(self.scores)}")
        if not all(math.isfinite(s) for s in self.scores):
            raise ValueError("relevance scores must be finite")


@dataclass
class MMRConfig:
    lam: float = DEFAULT_MMR_LAMBDA

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0,1], got {self.lam}")


def bm25_scores(
    query_tokens: frozenset[str],
    doc_token_lists: Sequence[Sequence[str]],
    k1: float = BM25_K1,
    b: float = BM25_B,
    epsilon: float = BM25_EPSILON,
) -> list[float]:
    """Okapi BM25 scores of each document against the query.

    The candidate documents themselves form the corpus. Negative idf values
    (terms in more than half the documents) are floored at
    ``epsilon * average idf``. Query tokens are accumulated in sorted order
    so scores are bit-reproducible regardless of set iteration order.
    """
    n_docs = len(doc_token_lists)
    doc_freqs = [Counter(tokens) for tokens in doc_token_lists]
    doc_lens = [len(tokens) for tokens in doc_token_lists]
    avgdl = sum(doc_lens) / n_docs if n_docs else 0.0

    df: Counter[str] = Counter()
    for freqs in doc_freqs:
        df.update(freqs.keys())

    idf: dict[str, float] = {}
    if df:
        negative = []
        total = 0.0
        for term in sorted(df):
            value = math.log(n_docs - df[term] + 0.5) - math.log(df[term] + 0.5)
            idf[term] = value
            total += value
            if value < 0:
                negative.append(term)
        floor = epsilon * (total / len(idf))
        for term in negative:
            idf[term] = floor

    scores = []
    for freqs, dl in zip(doc_freqs, doc_lens):
        score = 0.0
        for term in sorted(query_tokens):
            tf = freqs.get(term, 0)
            if tf == 0:
                continue
            norm = k1 * (1 - b + b * dl / avgdl)
            score += idf[term] * (tf * (k1 + 1)) / (tf + norm)
        scores.append(score)
    return scores


def _order_by_score(scores: Sequence[float]) -> list[int]:
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def bm25_rank(
    cluster_id: str,
    query_tokens: frozenset[str],
    doc_token_lists: Sequence[Sequence[str]],
) -> tuple[Ranking, RelevanceScores]:
    """Rank a pool by BM25; ties broken by ascending document index."""
    scores = bm25_scores(query_tokens, doc_token_lists)
    ranking = Ranking(cluster_id, "bm25", _order_by_score(scores))
    return ranking, RelevanceScores(scores)


def mmr_order(
    relevance: Sequence[float],
    doc_token_sets: Sequence[frozenset[str]],
    lam: float,
) -> list[int]:
    """Greedy maximal-marginal-relevance ordering.

    Relevance is min-max normalized to [0,1] (all 0.5 when constant); each
    step appends the unselected document maximizing
    ``lam * rel_norm - (1-lam) * max Jaccard to the selected set``.
    """
    n = len(relevance)
    lo, hi = min(relevance), max(relevance)
    if hi > lo:
        rel_norm = [(r - lo) / (hi - lo) for r in relevance]
    else:
        rel_norm = [0.5] * n

    sim = [[jaccard(doc_token_sets[i], doc_token_sets[j]) for j in range(n)] for i in range(n)]

    selected: list[int] = []
    remaining = list(range(n))
    while remaining:
        best = None
        best_score = -math.inf
        for i in remaining:  # ascending, so ties keep the smallest index
            max_sim = max((sim[i][j] for j in selected), default=0.0)
            score = lam * rel_norm[i] - (1 - lam) * max_sim
            if score > best_score:
                best, best_score = i, score
        selected.append(best)
        remaining.remove(best)
    return selected


def mmr_rank(
    cluster_id: str,
    relevance: RelevanceScores,
    doc_token_sets: Sequence[frozenset[str]],
    config: MMRConfig,
) -> Ranking:
    return Ranking(cluster_id, "mmr", mmr_order(relevance.scores, doc_token_sets, config.lam))


def random_rank(cluster_id: str, seed: int) -> Ranking:
    """Seeded random permutation, identical across runs for fixed (seed, cluster)."""
    return Ranking(cluster_id, "random", keyed_permutation(POOL_SIZE, hash64(seed, cluster_id)))


def build_prompt(pool: EvidencePool) -> str:
    """Listwise ranking prompt: template, query, then snippets in presentation order."""
    lines = [PROMPT_TEMPLATE, "", f"Query: {pool.query}", ""]
    for position, doc_index in enumerate(pool.presentation_order):
        lines.append(f"[{position}] {pool.documents[doc_index].text}")
    return "\n".join(lines)


_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*")
_JSON_DECODER = json.JSONDecoder()


def parse_ranking_response(text: str) -> list[int]:
    """Extract the 8 ranked presentation positions from a model response.

    Strips markdown code fences, then scans for the first balanced JSON
    object carrying ``ranked_indices``. Raises ParseFailure unless that value
    is exactly 8 unique integers in [0, 7].
    """
    cleaned = _FENCE_RE.sub("", text)
    for match in re.finditer(r"\{", cleaned):
        try:
            obj, _ = _JSON_DECODER.raw_decode(cleaned, match.start())
        except json.JSONDecodeError:
            continue
        if not isinstance(obj, dict) or "ranked_indices" not in obj:
            continue
        value = obj["ranked_indices"]
        if not isinstance(value, list) or len(value) != POOL_SIZE:
            raise ParseFailure(f"ranked_indices must hold exactly {POOL_SIZE} entries: {value!r}")
        for v in value:
            if isinstance(v, bool) or not isinstance(v, int):
                raise ParseFailure(f"non-integer index {v!r}")
            if not 0 <= v < POOL_SIZE:
                raise ParseFailure(f"index {v} out of range 0..{POOL_SIZE - 1}")
        if len(set(value)) != POOL_SIZE:
            raise ParseFailure(f"duplicate indices in {value!r}")
        return list(value)
    raise ParseFailure("no JSON object with ranked_indices found")


def _ranking_from_response(ranker_id: str, pool: EvidencePool, raw: str) -> Ranking:
    """Map response positions back to pool indices; on ParseFailure fall back
    to the presentation order (the model expressed no preference)."""
    try:
        positions = parse_ranking_response(raw)
    except ParseFailure:
        return Ranking(
            pool.cluster_id,
            ranker_id,
            list(pool.presentation_order),
            fallback_used=True,
            raw_response=raw,
        )
    ranked = [pool.presentation_order[p] for p in positions]
    return Ranking(pool.cluster_id, ranker_id, ranked, fallback_used=False, raw_response=raw)


class CompletionClient(Protocol):
    def rank(self, model: str, prompt: str, temperature: float | None) -> str: ...


def llm_rank(
    client: CompletionClient,
    model: str,
    pool: EvidencePool,
    temperature: float | None = 0.0,
) -> Ranking:
    """Live listwise ranking through the gateway.

    Gateway or backend failures propagate (never fabricate a ranking);
    malformed completions fall back to the presentation order with
    ``fallback_used`` set.
    """
    raw = client.rank(model, build_prompt(pool), temperature)
    return _ranking_from_response(f"llm:{model}", pool, raw)


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", name)


class FixtureStore:
    """Directory of recorded completions keyed <model>/<cluster_id>.txt."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, model: str, cluster_id: str) -> Path:
        return self.root / _safe_name(model) / f"{_safe_name(cluster_id)}.txt"

    def has(self, model: str, cluster_id: str) -> bool:
        return self._path(model, cluster_id).is_file()

    def get(self, model: str, cluster_id: str) -> str:
        path = self._path(model, cluster_id)
        if not path.is_file():
            raise MissingFixture(model, cluster_id)
        return path.read_text(encoding="utf-8")

    def put(self, model: str, cluster_id: str, raw: str) -> None:
        path = self._path(model, cluster_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(raw, encoding="utf-8")


def replay_rank(fixtures: FixtureStore, model: str, pool: EvidencePool) -> Ranking:
    """Deterministic replay of a recorded completion through the llm pipeline."""
    raw = fixtures.get(model, pool.cluster_id)
    return _ranking_from_response(f"replay:{model}", pool, raw)


def rank_pools_llm(
    client: CompletionClient,
    model: str,
    pools: Sequence[EvidencePool],
    max_inflight: int = 4,
    temperature: float | None = 0.0,
    max_retries: int = 3,
    backoff_base: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
    record_to: FixtureStore | None = None,
) -> list[Ranking]:
    """Rank many pools concurrently, bounded by ``max_inflight``.

    Retries throttled backends with exponential backoff; results are keyed by
    cluster_id so completion order never affects the output order. When
    ``record_to`` is given each raw completion is persisted before returning,
    making the live run replayable.
    """

    def work(pool: EvidencePool) -> Ranking:
        attempt = 0
        while True:
            try:
                ranking = llm_rank(client, model, pool, temperature)
                break
            except BackendError as exc:
                if not exc.retriable or attempt >= max_retries:
                    raise
                sleep(backoff_base * (2**attempt))
                attempt += 1
        if record_to is not None and ranking.raw_response is not None:
            record_to.put(model, pool.cluster_id, ranking.raw_response)
        return ranking

    results: dict[str, Ranking] = {}
    with ThreadPoolExecutor(max_workers=max_inflight) as pool_exec:
        futures = {pool_exec.submit(work, p): p.cluster_id for p in pools}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    return [results[p.cluster_id] for p in pools]


def ranking_to_dict(r: Ranking) -> dict:
    data = {
        "cluster_id": r.cluster_id,
        "ranker_id": r.ranker_id,
        "ranked_indices": list(r.ranked_indices),
        "fallback_used": r.fallback_used,
    }
    if r.raw_response is not None:
        data["raw_response"] = r.raw_response
    return data


def ranking_from_dict(data: dict) -> Ranking:
    return Ranking(
        cluster_id=str(data["cluster_id"]),
        ranker_id=str(data["ranker_id"]),
        ranked_indices=[int(i) for i in data["ranked_indices"]],
        fallback_used=bool(data.get("fallback_used", False)),
        raw_response=data.get("raw_response"),
    )
