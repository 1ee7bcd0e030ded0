"""Cluster ingestion and standardized 8-document evidence pools.

Clusters with fewer than eight usable sources are skipped. Larger clusters
are downsampled to eight by a Fisher-Yates draw keyed on
``hash64(sample_seed, cluster_id)``, with dataset-relative order restored
among the chosen eight so sampling leaves no ordering signal. The
presentation order shown to LLM rankers is an independent keyed permutation
shared by every model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

from . import POOL_SIZE
from .errors import EmptySummary, MalformedRecord, SchemaError
from .rng import hash64, keyed_permutation
from .textproc import split_sentences, truncate_chars

SOURCE_SEPARATOR = "|||||"

DEFAULT_MIN_SOURCES = 8
DEFAULT_SNIPPET_CHARS = 600
DEFAULT_QUERY_CHARS = 400


@dataclass
class ClusterRecord:
    cluster_id: str
    sources: list[str]
    summary: str


@dataclass
class Document:
    index: int
    text: str


@dataclass
class EvidencePool:
    cluster_id: str
    query: str
    documents: list[Document]
    summary: str
    presentation_order: list[int]

    def validate(self) -> None:
        if len(self.documents) != POOL_SIZE:
            raise ValueError(f"expected {POOL_SIZE} documents, got {len(self.documents)}")
        for i, doc in enumerate(self.documents):
            if doc.index != i:
                raise ValueError(f"document {i} carries index {doc.index}")
            if not doc.text.strip():
                raise ValueError(f"document {i} has empty text")
        if not self.query.strip():
            raise ValueError("query is empty")
        if sorted(self.presentation_order) != list(range(POOL_SIZE)):
            raise ValueError(f"presentation_order {self.presentation_order} is not a permutation")

    def doc_texts(self) -> list[str]:
        return [d.text for d in self.documents]


def parse_cluster(raw: Mapping, default_id: str | None = None) -> ClusterRecord:
    """Build a ClusterRecord from one dataset record.

    ``sources`` may be a list of article texts or a single string joined by
    the ``|||||`` separator (``document`` is accepted as an alias). Sources
    are trimmed and empties dropped, leaving the usable sources.
    """
    if "summary" not in raw:
        raise MalformedRecord("record has no summary field")
    source_field = raw.get("sources", raw.get("document"))
    if source_field is None:
        raise MalformedRecord("record has no sources field")
    if isinstance(source_field, str):
        parts = source_field.split(SOURCE_SEPARATOR)
    else:
        parts = list(source_field)
    sources = [s for s in (str(p).strip() for p in parts) if s]
    cluster_id = str(raw.get("cluster_id", default_id if default_id is not None else ""))
    if not cluster_id:
        raise MalformedRecord("record has no cluster_id and no default was supplied")
    return ClusterRecord(cluster_id=cluster_id, sources=sources, summary=str(raw["summary"]))


def build_pool(
    cluster: ClusterRecord,
    sample_seed: int,
    shuffle_seed: int,
    min_sources: int = DEFAULT_MIN_SOURCES,
    snippet_chars: int = DEFAULT_SNIPPET_CHARS,
    query_chars: int = DEFAULT_QUERY_CHARS,
) -> EvidencePool | None:
    """Standardize one cluster into an 8-document pool, or None when skipped.

    Raises EmptySummary when the summary contains no sentence to use as the
    query.
    """
    usable = [s for s in cluster.sources if s.strip()]
    if len(usable) < max(min_sources, POOL_SIZE):
        return None

    order = keyed_permutation(len(usable), hash64(sample_seed, cluster.cluster_id))
    chosen = sorted(order[:POOL_SIZE])
    documents = [
        Document(index=i, text=truncate_chars(usable[src], snippet_chars))
        for i, src in enumerate(chosen)
    ]

    sentences = split_sentences(cluster.summary)
    if not sentences:
        raise EmptySummary(f"cluster {cluster.cluster_id}: summary yields no sentence")
    query = truncate_chars(sentences[0], query_chars)

    presentation_order = keyed_permutation(POOL_SIZE, hash64(shuffle_seed, cluster.cluster_id))
    pool = EvidencePool(
        cluster_id=cluster.cluster_id,
        query=query,
        documents=documents,
        summary=cluster.summary,
        presentation_order=presentation_order,
    )
    pool.validate()
    return pool


def pool_to_dict(pool: EvidencePool) -> dict:
    return {
        "cluster_id": pool.cluster_id,
        "query": pool.query,
        "documents": [{"index": d.index, "text": d.text} for d in pool.documents],
        "summary": pool.summary,
        "presentation_order": list(pool.presentation_order),
    }


def pool_from_dict(data: Mapping) -> EvidencePool:
    pool = EvidencePool(
        cluster_id=str(data["cluster_id"]),
        query=str(data["query"]),
        documents=[Document(index=int(d["index"]), text=str(d["text"])) for d in data["documents"]],
        summary=str(data["summary"]),
        presentation_order=[int(i) for i in data["presentation_order"]],
    )
    pool.validate()
    return pool


def save_pools(pools: list[EvidencePool], path: str) -> None:
    """Write pools to a UTF-8 JSONL file, one pool per line, in the given order."""
    with open(path, "w", encoding="utf-8") as f:
        for pool in pools:
            f.write(json.dumps(pool_to_dict(pool), sort_keys=True, ensure_ascii=False) + "\n")


def load_pools(path: str) -> list[EvidencePool]:
    """Read pools from a JSONL file; schema violations name the offending line."""
    pools = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                pools.append(pool_from_dict(data))
            except (ValueError, KeyError, TypeError) as exc:
                raise SchemaError(path, lineno, str(exc)) from exc
    return pools
