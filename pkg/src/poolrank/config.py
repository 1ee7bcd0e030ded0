"""Run configuration: a structured document mirroring the pipeline knobs.

Configs load from JSON or YAML. Relative paths are resolved against the
config file's directory; the run directory is named by a digest of the raw
config (after CLI overrides), so a changed config never overwrites an
earlier run.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .rankers import BASELINE_RANKERS

GATEWAY_URL_ENV = "POOLRANK_GATEWAY_URL"


@dataclass
class PoolParams:
    min_sources: int = 8
    snippet_chars: int = 600
    query_chars: int = 400


@dataclass
class Seeds:
    sample: int = 1
    shuffle: int = 2
    random_ranker: int = 3
    bootstrap: int = 4


@dataclass
class RunConfig:
    dataset: str
    rankers: list[str]
    pool: PoolParams = field(default_factory=PoolParams)
    seeds: Seeds = field(default_factory=Seeds)
    models: list[str] | None = None
    mmr_lambda: float = 0.7
    gateway_url: str | None = None
    fixtures_dir: str | None = None
    embedding_model: str = "minilm-l6-v2"
    embedding_cache: str = "embeddings.jsonl"
    stopwords: str | None = None
    ks: list[int] = field(default_factory=lambda: [3, 4, 5, 6])
    table_ks: list[int] = field(default_factory=lambda: [3, 5])
    resamples: int = 10_000
    ci_level: float = 0.95
    offline: bool = False
    max_inflight: int = 4
    run_root: str = "runs"

    def resolved_gateway_url(self) -> str | None:
        return self.gateway_url or os.environ.get(GATEWAY_URL_ENV)

    def model_rankers(self) -> list[str]:
        """Ranker ids that form the model axis of the report tables."""
        if self.models:
            return list(self.models)
        non_baseline = [r for r in self.rankers if r not in BASELINE_RANKERS]
        return non_baseline or list(self.rankers)

    def validate(self) -> None:
        if not self.rankers:
            raise ConfigError("rankers list is empty")
        for ranker in self.rankers:
            if ranker in BASELINE_RANKERS:
                continue
            kind, _, name = ranker.partition(":")
            if kind not in ("llm", "replay") or not name:
                raise ConfigError(f"unknown ranker {ranker!r}")
            if kind == "replay" and not self.fixtures_dir:
                raise ConfigError(f"ranker {ranker!r} needs fixtures_dir")
            if kind == "llm" and self.offline:
                raise ConfigError(f"ranker {ranker!r} cannot run offline")
            if kind == "llm" and not self.resolved_gateway_url():
                raise ConfigError(
                    f"ranker {ranker!r} needs gateway_url or ${GATEWAY_URL_ENV}"
                )
        if self.models:
            missing = [m for m in self.models if m not in self.rankers]
            if missing:
                raise ConfigError(f"models not in rankers list: {missing}")
        if not self.ks or any(not 1 <= k <= 8 for k in self.ks):
            raise ConfigError(f"ks must lie within [1, 8]: {self.ks}")
        if any(k not in self.ks for k in self.table_ks):
            raise ConfigError(f"table_ks {self.table_ks} must be a subset of ks {self.ks}")
        if not 0.0 <= self.mmr_lambda <= 1.0:
            raise ConfigError(f"mmr_lambda must be in [0,1]: {self.mmr_lambda}")
        if self.resamples < 1:
            raise ConfigError("resamples must be >= 1")
        if not 0.0 < self.ci_level < 1.0:
            raise ConfigError("ci_level must be in (0, 1)")
        if self.pool.min_sources < 8:
            raise ConfigError("min_sources must be >= 8 (pools hold exactly 8 documents)")
        if self.max_inflight < 1:
            raise ConfigError("max_inflight must be >= 1")
        if not Path(self.dataset).is_file():
            raise ConfigError(f"dataset not found: {self.dataset}")
        if self.stopwords and not Path(self.stopwords).is_file():
            raise ConfigError(f"stopwords file not found: {self.stopwords}")
        if self.fixtures_dir and not Path(self.fixtures_dir).is_dir():
            raise ConfigError(f"fixtures_dir not found: {self.fixtures_dir}")
        # an offline run with a cold embedding cache is legal here; it aborts
        # in the score stage with CacheMiss


def _merge(base: dict, overrides: dict) -> dict:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def config_digest(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _resolve_path(base: Path, value: str | None) -> str | None:
    if value is None:
        return None
    path = Path(value)
    return str(path if path.is_absolute() else base / path)


def load_config(path: str, overrides: dict | None = None) -> tuple[RunConfig, str, dict]:
    """Load, merge overrides, resolve paths, validate.

    Returns (config, digest, merged raw dict); the digest names the run
    directory and the raw dict is snapshotted into the manifest.
    """
    cfg_path = Path(path)
    if not cfg_path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = cfg_path.read_text(encoding="utf-8")
    if cfg_path.suffix in (".yaml", ".yml"):
        raw = yaml.safe_load(text)
    else:
        raw = json.loads(text)
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping: {path}")
    if overrides:
        raw = _merge(raw, overrides)
    digest = config_digest(raw)

    base = cfg_path.resolve().parent
    known = {f.name for f in RunConfig.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    data = dict(raw)
    data.setdefault("embedding_cache", "embeddings.jsonl")
    data.setdefault("run_root", "runs")
    for key in ("dataset", "fixtures_dir", "embedding_cache", "stopwords", "run_root"):
        if data.get(key) is not None:
            data[key] = _resolve_path(base, data[key])
    try:
        cfg = RunConfig(
            dataset=data.pop("dataset"),
            rankers=list(data.pop("rankers")),
            pool=PoolParams(**data.pop("pool", {})),
            seeds=Seeds(**data.pop("seeds", {})),
            **data,
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc
    cfg.validate()
    return cfg, digest, raw
