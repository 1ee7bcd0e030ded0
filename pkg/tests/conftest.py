from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from poolrank import POOL_SIZE
from poolrank.corpus import Document, EvidencePool
from poolrank.embeddings import EmbeddingVector
from poolrank.rng import SplitMix64, hash64

settings.register_profile(
    "ci", deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ci")

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURES_DIR = REPO_ROOT / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES_DIR


def make_pool(
    cluster_id: str = "pool-0",
    texts: list[str] | None = None,
    summary: str = "A fire broke out downtown. Two people were hurt.",
    presentation_order: list[int] | None = None,
    query: str | None = None,
) -> EvidencePool:
    if texts is None:
        texts = [f"document number {i} talks about fires and rescues" for i in range(POOL_SIZE)]
    docs = [Document(index=i, text=t) for i, t in enumerate(texts)]
    pool = EvidencePool(
        cluster_id=cluster_id,
        query=query if query is not None else "A fire broke out downtown.",
        documents=docs,
        summary=summary,
        presentation_order=presentation_order or list(range(POOL_SIZE)),
    )
    pool.validate()
    return pool


def unit_vector(values) -> EmbeddingVector:
    arr = np.asarray(values, dtype=np.float64)
    return EmbeddingVector(arr / np.linalg.norm(arr))


def seeded_unit_vector(key: str, dim: int = 16) -> EmbeddingVector:
    gen = SplitMix64(hash64("test-vectors", key))
    raw = np.array([gen.next_u64() / 2**63 - 1.0 for _ in range(dim)])
    return unit_vector(raw)
