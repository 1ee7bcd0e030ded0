"""L2-normalized embeddings from a pluggable provider with a persistent cache.

Vectors are keyed by a content hash of (model name, text) so identical text
is fetched once. Offline mode never touches the network: a cache miss is an
error. The cache file is line-delimited JSON with full-precision decimal
floats, rewritten atomically (write temp, then rename).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import BackendError, CacheMiss, DimensionMismatch, ZeroVector

NORM_TOLERANCE = 1e-6
DEFAULT_BATCH_SIZE = 32


def source_key(model: str, text: str) -> str:
    h = hashlib.sha256()
    h.update(model.encode("utf-8"))
    h.update(b"\x00")
    h.update(text.encode("utf-8"))
    return h.hexdigest()


@dataclass
class EmbeddingVector:
    values: np.ndarray
    source_key: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        norm = float(np.linalg.norm(self.values))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"vector norm {norm} deviates from 1 by more than {NORM_TOLERANCE}")

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def normalize(raw: Sequence[float], key: str = "") -> EmbeddingVector:
    """Divide by the Euclidean norm; all-zero input raises ZeroVector."""
    values = np.asarray(raw, dtype=np.float64)
    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        raise ZeroVector("cannot normalize an all-zero vector")
    return EmbeddingVector(values / norm, key)


class EmbeddingProvider(Protocol):
    """Source of raw (not necessarily normalized) vectors for a fixed model."""

    def fetch(self, texts: list[str]) -> list[list[float]]: ...


@dataclass
class _CacheEntry:
    model: str
    dim: int
    values: list[float]


class EmbeddingCache:
    """JSONL-backed vector cache; atomic rewrites keep readers consistent."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[str, _CacheEntry] = {}
        self._dirty = False
        if self.path.is_file():
            with open(self.path, encoding="utf-8") as f:
                for line in f:
                    if not line.strip():
                        continue
                    rec = json.loads(line)
                    self._entries[rec["source_key"]] = _CacheEntry(
                        model=rec["model"], dim=int(rec["dim"]),
                        values=[float(v) for v in rec["values"]],
                    )

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> _CacheEntry | None:
        return self._entries.get(key)

    def put(self, key: str, model: str, values: Sequence[float]) -> None:
        floats = [float(v) for v in values]
        self._entries[key] = _CacheEntry(model=model, dim=len(floats), values=floats)
        self._dirty = True

    def flush(self) -> None:
        """Rewrite the cache file atomically, sorted for stable bytes."""
        if not self._dirty:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            for key in sorted(self._entries):
                entry = self._entries[key]
                f.write(json.dumps(
                    {"source_key": key, "model": entry.model, "dim": entry.dim,
                     "values": entry.values},
                    sort_keys=True,
                ) + "\n")
        os.replace(tmp, self.path)
        self._dirty = False


class EmbeddingService:
    """Order-preserving text embedding with cache-first lookup.

    Online misses are fetched in batches, normalized, persisted, and served;
    offline misses raise CacheMiss. All vectors in one service must share a
    dimension or DimensionMismatch is raised.
    """

    def __init__(
        self,
        model: str,
        cache: EmbeddingCache,
        provider: EmbeddingProvider | None = None,
        offline: bool = False,
        batch_size: int = DEFAULT_BATCH_SIZE,
    ):
        self.model = model
        self.cache = cache
        self.provider = provider
        self.offline = offline
        self.batch_size = batch_size

    def _fetch_misses(self, missing_texts: list[str]) -> None:
        if self.offline or self.provider is None:
            raise CacheMiss(
                f"{len(missing_texts)} texts not in cache for model={self.model} "
                f"(first: {missing_texts[0][:60]!r})"
            )
        for start in range(0, len(missing_texts), self.batch_size):
            batch = missing_texts[start : start + self.batch_size]
            raw_vectors = self.provider.fetch(batch)
            if len(raw_vectors) != len(batch):
                raise BackendError(self.model, f"{len(batch)} texts sent, {len(raw_vectors)} vectors returned")
            for text, raw in zip(batch, raw_vectors):
                vec = normalize(raw, source_key(self.model, text))
                self.cache.put(vec.source_key, self.model, vec.values.tolist())
        self.cache.flush()

    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        keys = [source_key(self.model, t) for t in texts]
        missing, seen = [], set()
        for text, key in zip(texts, keys):
            if key not in self.cache and key not in seen:
                missing.append(text)
                seen.add(key)
        if missing:
            self._fetch_misses(missing)

        vectors: list[EmbeddingVector] = []
        dim: int | None = None
        for key in keys:
            entry = self.cache.get(key)
            if entry is None:
                raise CacheMiss(f"key {key} absent after fetch")
            if dim is None:
                dim = entry.dim
            elif entry.dim != dim:
                raise DimensionMismatch(f"got {entry.dim}-dim vector after {dim}-dim")
            vectors.append(EmbeddingVector(np.asarray(entry.values), key))
        return vectors
