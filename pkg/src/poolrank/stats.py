"""Paired bootstrap over clusters: mean deltas with percentile CIs.

Each resample draws whole clusters with replacement, so the pairing between
the two rankers' values is never broken. The resampling generator is keyed
per comparison, so adding one comparison never perturbs another's interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import MissingMetrics, TooFewSamples
from .rng import hash64, philox

DEFAULT_RESAMPLES = 10_000
DEFAULT_CI_LEVEL = 0.95

METRIC_NAMES = ("coverage", "redundancy", "summary_recall", "sem_redundancy", "sem_coverage")

# orientation per baseline: positive delta means the first method is higher
COMPARISONS = {
    "mmr": "mmr_minus_llm",
    "bm25": "bm25_minus_llm",
    "random": "llm_minus_random",
}

_CHUNK_ELEMENTS = 16_000_000


@dataclass
class PairedSample:
    cluster_id: str
    value_a: float
    value_b: float


@dataclass
class BootstrapDelta:
    mean_delta: float
    ci_low: float
    ci_high: float
    resamples: int
    ci_level: float
    seed: int

    def __post_init__(self):
        if self.ci_low > self.ci_high:
            raise ValueError(f"ci_low {self.ci_low} > ci_high {self.ci_high}")


def paired_bootstrap(
    samples: Sequence[PairedSample],
    resamples: int = DEFAULT_RESAMPLES,
    ci_level: float = DEFAULT_CI_LEVEL,
    seed: int = 0,
) -> BootstrapDelta:
    """Mean per-cluster delta with a seeded percentile confidence interval."""
    if len(samples) < 2:
        raise TooFewSamples(f"paired bootstrap needs >= 2 clusters, got {len(samples)}")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    if not 0.0 < ci_level < 1.0:
        raise ValueError("ci_level must be in (0, 1)")
    ids = [s.cluster_id for s in samples]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate cluster_ids in paired samples")

    deltas = np.array([s.value_a - s.value_b for s in samples], dtype=np.float64)
    if not np.all(np.isfinite(deltas)):
        raise ValueError("paired samples must be finite")
    n = len(deltas)

    if np.all(deltas == deltas[0]):
        # the mean of identical values is that value, exactly
        mean_delta = float(deltas[0])
    else:
        mean_delta = math.fsum(deltas.tolist()) / n
    # resampled means are computed around the point estimate so a constant
    # sample yields an exact point interval
    centered = deltas - mean_delta

    gen = philox(seed)
    means = np.empty(resamples, dtype=np.float64)
    chunk = max(1, _CHUNK_ELEMENTS // n)
    done = 0
    while done < resamples:
        take = min(chunk, resamples - done)
        idx = gen.integers(0, n, size=(take, n))
        means[done : done + take] = mean_delta + centered[idx].mean(axis=1)
        done += take

    alpha = (1.0 - ci_level) / 2.0
    ci_low, ci_high = np.quantile(means, [alpha, 1.0 - alpha], method="linear")
    return BootstrapDelta(
        mean_delta=mean_delta,
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        resamples=resamples,
        ci_level=ci_level,
        seed=seed,
    )


class MetricsStore:
    """Per-(ranker, k) metric values keyed by cluster."""

    def __init__(self):
        self._values: dict[tuple[str, int], dict[str, dict[str, float]]] = {}

    def add(self, cluster_id: str, ranker_id: str, k: int, values: dict[str, float]) -> None:
        self._values.setdefault((ranker_id, k), {})[cluster_id] = dict(values)

    def rankers(self) -> list[str]:
        return sorted({ranker for ranker, _ in self._values})

    def cluster_values(self, ranker_id: str, k: int, metric: str) -> dict[str, float]:
        by_cluster = self._values.get((ranker_id, k))
        if not by_cluster:
            raise MissingMetrics(ranker_id, k)
        return {cid: vals[metric] for cid, vals in by_cluster.items()}


@dataclass
class PlanRow:
    model: str
    baseline: str
    metric: str
    k: int


@dataclass
class DeltaRow:
    model: str
    metric: str
    comparison: str
    k: int
    delta: BootstrapDelta


def default_plan(models: Iterable[str], ks: Iterable[int]) -> list[PlanRow]:
    """Every (model, baseline, metric, k) cell of the delta tables."""
    return [
        PlanRow(model=m, baseline=b, metric=metric, k=k)
        for m in models
        for metric in METRIC_NAMES
        for b in ("mmr", "bm25", "random")
        for k in ks
    ]


def build_comparisons(
    store: MetricsStore,
    plan: Sequence[PlanRow],
    resamples: int = DEFAULT_RESAMPLES,
    ci_level: float = DEFAULT_CI_LEVEL,
    seed: int = 0,
) -> list[DeltaRow]:
    """One paired-bootstrap delta per plan row.

    Orientation mirrors the report tables: MMR-LLM, BM25-LLM, LLM-Random.
    """
    rows = []
    for row in plan:
        comparison = COMPARISONS[row.baseline]
        model_values = store.cluster_values(row.model, row.k, row.metric)
        base_values = store.cluster_values(row.baseline, row.k, row.metric)
        if set(model_values) != set(base_values):
            raise MissingMetrics(
                f"{row.model} vs {row.baseline} (cluster sets differ)", row.k
            )
        if row.baseline == "random":
            a_values, b_values = model_values, base_values
        else:
            a_values, b_values = base_values, model_values
        samples = [
            PairedSample(cid, a_values[cid], b_values[cid]) for cid in sorted(a_values)
        ]
        delta = paired_bootstrap(
            samples,
            resamples=resamples,
            ci_level=ci_level,
            seed=hash64(seed, row.model, row.metric, comparison, row.k),
        )
        rows.append(DeltaRow(row.model, row.metric, comparison, row.k, delta))
    return rows
