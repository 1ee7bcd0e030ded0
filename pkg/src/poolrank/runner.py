"""End-to-end orchestration: pools -> rank -> score -> compare -> report.

A run directory is named by the config digest and owned by one process at a
time (lock file). Stages are skipped when their outputs already exist, so
interrupted runs resume; outputs are written atomically and a manifest with
content hashes of every input and output is written last.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import os
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import __version__
from .config import RunConfig
from .corpus import build_pool, load_pools, parse_cluster, pool_to_dict, save_pools
from .embeddings import EmbeddingCache, EmbeddingService
from .errors import LockError, PoolrankError, StageError
from .gateway_client import GatewayClient, GatewayEmbeddingProvider
from .metrics import (
    coverage,
    kendall_tau,
    redundancy,
    select_top_k,
    sem_coverage,
    sem_redundancy,
    summary_recall,
    topk_jaccard,
)
from .rankers import (
    BASELINE_RANKERS,
    FixtureStore,
    MMRConfig,
    Ranking,
    bm25_rank,
    mmr_rank,
    random_rank,
    rank_pools_llm,
    ranking_from_dict,
    ranking_to_dict,
    replay_rank,
)
from .report import (
    emit_agreement_table,
    emit_curve_data,
    emit_delta_table,
    validate_agreement_table,
    validate_curve_data,
    validate_delta_table,
)
from .stats import MetricsStore, build_comparisons, default_plan
from .textproc import (
    DEFAULT_STOPWORDS,
    load_stopwords,
    split_sentences,
    token_list,
    tokenize,
)

STAGES = ("pools", "rank", "score", "compare", "report")

STAGE_OUTPUTS = {
    "pools": ("pools.jsonl",),
    "rank": ("rankings.jsonl",),
    "score": ("metrics.jsonl", "agreement.jsonl"),
    "compare": ("deltas.jsonl",),
    "report": (
        "report/agreement_table.tsv",
        "report/delta_table.tsv",
        "report/curves.jsonl",
        "report/diagnostics.json",
    ),
}

DIAGNOSTICS_FILE = "diagnostics.json"
MANIFEST_FILE = "manifest.json"
LOCK_FILE = ".lock"


def _write_text_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_jsonl_atomic(path: Path, records: Iterable[dict]) -> None:
    lines = [json.dumps(r, sort_keys=True, ensure_ascii=False) for r in records]
    _write_text_atomic(path, "".join(line + "\n" for line in lines))


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rows.append(json.loads(line))
    return rows


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunLock:
    """Exclusive ownership of a run directory."""

    def __init__(self, run_dir: Path):
        self.path = run_dir / LOCK_FILE

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockError(f"run directory is locked: {self.path}") from None
        with os.fdopen(fd, "w") as f:
            f.write(str(os.getpid()))
        return self

    def __exit__(self, *exc_info):
        self.path.unlink(missing_ok=True)
        return False


def _stopwords_for(cfg: RunConfig) -> frozenset[str]:
    return load_stopwords(cfg.stopwords) if cfg.stopwords else DEFAULT_STOPWORDS


def stage_pools(cfg: RunConfig, run_dir: Path) -> dict:
    """Parse the dataset, build standardized pools, write them sorted by cluster_id."""
    pools = []
    skipped = 0
    read = 0
    with open(cfg.dataset, encoding="utf-8") as f:
        for index, line in enumerate(f):
            if not line.strip():
                continue
            read += 1
            try:
                record = json.loads(line)
                cluster = parse_cluster(record, default_id=str(index))
                pool = build_pool(
                    cluster,
                    sample_seed=cfg.seeds.sample,
                    shuffle_seed=cfg.seeds.shuffle,
                    min_sources=cfg.pool.min_sources,
                    snippet_chars=cfg.pool.snippet_chars,
                    query_chars=cfg.pool.query_chars,
                )
            except (PoolrankError, ValueError) as exc:
                raise StageError("pools", str(exc), cluster_id=str(index)) from exc
            if pool is None:
                skipped += 1
            else:
                pools.append(pool)
    pools.sort(key=lambda p: p.cluster_id)
    write_jsonl_atomic(run_dir / "pools.jsonl", [pool_to_dict(p) for p in pools])
    return {"clusters_read": read, "pools_built": len(pools), "skipped_clusters": skipped}


def rank_one_pool(cfg, pool, stopwords, fixtures) -> list[Ranking]:
    query_tokens = tokenize(pool.query, stopwords)
    doc_token_lists = [token_list(d.text, stopwords) for d in pool.documents]
    doc_token_sets = [frozenset(tokens) for tokens in doc_token_lists]

    bm25_ranking, relevance = bm25_rank(pool.cluster_id, query_tokens, doc_token_lists)
    rankings = []
    for ranker in cfg.rankers:
        if ranker == "bm25":
            rankings.append(bm25_ranking)
        elif ranker == "mmr":
            rankings.append(
                mmr_rank(pool.cluster_id, relevance, doc_token_sets, MMRConfig(cfg.mmr_lambda))
            )
        elif ranker == "random":
            rankings.append(random_rank(pool.cluster_id, cfg.seeds.random_ranker))
        elif ranker.startswith("replay:"):
            rankings.append(replay_rank(fixtures, ranker.partition(":")[2], pool))
        # llm rankers run pooled across clusters, not here
    return rankings


def stage_rank(cfg: RunConfig, run_dir: Path) -> dict:
    """Produce one ranking per (pool, configured ranker)."""
    pools = load_pools(run_dir / "pools.jsonl")
    stopwords = _stopwords_for(cfg)
    fixtures = FixtureStore(cfg.fixtures_dir) if cfg.fixtures_dir else None

    rankings: list[Ranking] = []
    for pool in pools:
        try:
            rankings.extend(rank_one_pool(cfg, pool, stopwords, fixtures))
        except PoolrankError as exc:
            raise StageError("rank", str(exc), cluster_id=pool.cluster_id) from exc

    llm_models = [r.partition(":")[2] for r in cfg.rankers if r.startswith("llm:")]
    if llm_models:
        client = GatewayClient(cfg.resolved_gateway_url())
        record_to = fixtures or FixtureStore(run_dir / "responses")
        for model in llm_models:
            try:
                rankings.extend(
                    rank_pools_llm(
                        client,
                        model,
                        pools,
                        max_inflight=cfg.max_inflight,
                        record_to=record_to,
                    )
                )
            except PoolrankError as exc:
                raise StageError("rank", str(exc)) from exc

    rankings.sort(key=lambda r: (r.cluster_id, r.ranker_id))
    write_jsonl_atomic(run_dir / "rankings.jsonl", [ranking_to_dict(r) for r in rankings])

    fallbacks = sum(1 for r in rankings if r.fallback_used)
    parsed = sum(1 for r in rankings if r.raw_response is not None)
    return {
        "rankings": len(rankings),
        "fallbacks": fallbacks,
        "fallback_rate": (fallbacks / parsed) if parsed else 0.0,
    }


def _embedding_service(cfg: RunConfig) -> EmbeddingService:
    cache = EmbeddingCache(cfg.embedding_cache)
    provider = None
    if not cfg.offline:
        url = cfg.resolved_gateway_url()
        if url:
            provider = GatewayEmbeddingProvider(GatewayClient(url), cfg.embedding_model)
    return EmbeddingService(cfg.embedding_model, cache, provider=provider, offline=cfg.offline)


def stage_score(cfg: RunConfig, run_dir: Path) -> dict:
    """Compute the five selection metrics per (cluster, ranker, K) and the
    agreement stats per (cluster, model, baseline, K)."""
    pools = {p.cluster_id: p for p in load_pools(run_dir / "pools.jsonl")}
    rankings = [ranking_from_dict(r) for r in _read_jsonl(run_dir / "rankings.jsonl")]
    stopwords = _stopwords_for(cfg)
    service = _embedding_service(cfg)

    by_cluster: dict[str, dict[str, Ranking]] = {}
    for r in rankings:
        by_cluster.setdefault(r.cluster_id, {})[r.ranker_id] = r

    models = cfg.model_rankers()
    baselines = [b for b in BASELINE_RANKERS if b in cfg.rankers]

    metric_rows: list[dict] = []
    agreement_rows: list[dict] = []
    diag = {"coverage_zero_query": 0, "summary_recall_zero_summary": 0, "redundancy_empty_pairs": 0}

    for cluster_id in sorted(pools):
        pool = pools[cluster_id]
        cluster_rankings = by_cluster.get(cluster_id, {})
        try:
            query_tokens = tokenize(pool.query, stopwords)
            summary_tokens = tokenize(pool.summary, stopwords)
            doc_token_sets = [tokenize(d.text, stopwords) for d in pool.documents]
            doc_embeddings = service.embed_texts(pool.doc_texts())
            sentence_embeddings = service.embed_texts(split_sentences(pool.summary))

            for ranker_id in sorted(cluster_rankings):
                ranking = cluster_rankings[ranker_id]
                for k in sorted(cfg.ks):
                    selected = sorted(select_top_k(ranking, k).indices)
                    sel_tokens = [doc_token_sets[i] for i in selected]
                    sel_embeddings = [doc_embeddings[i] for i in selected]

                    if not query_tokens:
                        diag["coverage_zero_query"] += 1
                    if not summary_tokens:
                        diag["summary_recall_zero_summary"] += 1
                    empty_sets = sum(1 for t in sel_tokens if not t)
                    diag["redundancy_empty_pairs"] += empty_sets * (empty_sets - 1) // 2

                    metric_rows.append(
                        {
                            "cluster_id": cluster_id,
                            "ranker_id": ranker_id,
                            "k": k,
                            "coverage": coverage(sel_tokens, query_tokens),
                            "redundancy": redundancy(sel_tokens),
                            "summary_recall": summary_recall(sel_tokens, summary_tokens),
                            "sem_redundancy": sem_redundancy(sel_embeddings),
                            "sem_coverage": sem_coverage(sentence_embeddings, sel_embeddings),
                        }
                    )

            for model in sorted(models):
                for baseline in baselines:
                    if model not in cluster_rankings or baseline not in cluster_rankings:
                        continue
                    a = cluster_rankings[model]
                    b = cluster_rankings[baseline]
                    tau = kendall_tau(a.ranked_indices, b.ranked_indices)
                    for k in sorted(cfg.ks):
                        agreement_rows.append(
                            {
                                "cluster_id": cluster_id,
                                "ranker_a": model,
                                "ranker_b": baseline,
                                "k": k,
                                "kendall_tau": tau,
                                "topk_jaccard": topk_jaccard(a.ranked_indices, b.ranked_indices, k),
                            }
                        )
        except PoolrankError as exc:
            raise StageError("score", str(exc), cluster_id=cluster_id) from exc

    write_jsonl_atomic(run_dir / "metrics.jsonl", metric_rows)
    write_jsonl_atomic(run_dir / "agreement.jsonl", agreement_rows)
    diag.update({"metric_rows": len(metric_rows), "agreement_rows": len(agreement_rows)})
    return diag


def stage_compare(cfg: RunConfig, run_dir: Path) -> dict:
    """Paired-bootstrap deltas for every (model, metric, comparison, K)."""
    store = MetricsStore()
    for row in _read_jsonl(run_dir / "metrics.jsonl"):
        values = {
            name: row[name]
            for name in ("coverage", "redundancy", "summary_recall", "sem_redundancy", "sem_coverage")
        }
        store.add(row["cluster_id"], row["ranker_id"], int(row["k"]), values)

    plan = default_plan(cfg.model_rankers(), sorted(cfg.ks))
    try:
        delta_rows = build_comparisons(
            store, plan, resamples=cfg.resamples, ci_level=cfg.ci_level, seed=cfg.seeds.bootstrap
        )
    except PoolrankError as exc:
        raise StageError("compare", str(exc)) from exc

    records = [
        {
            "model": r.model,
            "metric": r.metric,
            "comparison": r.comparison,
            "k": r.k,
            "mean_delta": r.delta.mean_delta,
            "ci_low": r.delta.ci_low,
            "ci_high": r.delta.ci_high,
        }
        for r in sorted(delta_rows, key=lambda r: (r.model, r.metric, r.comparison, r.k))
    ]
    write_jsonl_atomic(run_dir / "deltas.jsonl", records)
    return {"delta_rows": len(records), "resamples": cfg.resamples, "ci_level": cfg.ci_level}


def _load_delta_rows(run_dir: Path):
    from .stats import BootstrapDelta, DeltaRow

    rows = []
    for r in _read_jsonl(run_dir / "deltas.jsonl"):
        rows.append(
            DeltaRow(
                model=r["model"],
                metric=r["metric"],
                comparison=r["comparison"],
                k=int(r["k"]),
                delta=BootstrapDelta(
                    mean_delta=float(r["mean_delta"]),
                    ci_low=float(r["ci_low"]),
                    ci_high=float(r["ci_high"]),
                    resamples=0,
                    ci_level=0.0,
                    seed=0,
                ),
            )
        )
    return rows


def stage_report(cfg: RunConfig, run_dir: Path) -> dict:
    """Emit the agreement table, delta table, curve data and diagnostics."""
    agreement_rows = _read_jsonl(run_dir / "agreement.jsonl")
    delta_rows = _load_delta_rows(run_dir)
    models = cfg.model_rankers()
    report_dir = run_dir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)

    try:
        emit_agreement_table(agreement_rows, models, report_dir / "agreement_table.tsv")
        emit_delta_table(delta_rows, models, sorted(cfg.table_ks), report_dir / "delta_table.tsv")
        emit_curve_data(delta_rows, models, sorted(cfg.ks), report_dir / "curves.jsonl")
    except PoolrankError as exc:
        raise StageError("report", str(exc)) from exc

    validate_agreement_table(report_dir / "agreement_table.tsv")
    validate_delta_table(report_dir / "delta_table.tsv", sorted(cfg.table_ks))
    validate_curve_data(report_dir / "curves.jsonl", sorted(cfg.ks))

    diagnostics = _read_diagnostics(run_dir)
    summary = {
        "skipped_clusters": diagnostics.get("pools", {}).get("skipped_clusters", 0),
        "fallbacks": diagnostics.get("rank", {}).get("fallbacks", 0),
        "fallback_rate": diagnostics.get("rank", {}).get("fallback_rate", 0.0),
        "zero_denominator_events": {
            name: diagnostics.get("score", {}).get(name, 0)
            for name in ("coverage_zero_query", "summary_recall_zero_summary", "redundancy_empty_pairs")
        },
    }
    _write_text_atomic(
        report_dir / "diagnostics.json", json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    return {"report_files": len(STAGE_OUTPUTS["report"])}


STAGE_FUNCS: dict[str, Callable[[RunConfig, Path], dict]] = {
    "pools": stage_pools,
    "rank": stage_rank,
    "score": stage_score,
    "compare": stage_compare,
    "report": stage_report,
}


def _read_diagnostics(run_dir: Path) -> dict:
    path = run_dir / DIAGNOSTICS_FILE
    if path.is_file():
        return json.loads(path.read_text(encoding="utf-8"))
    return {}


def _write_diagnostics(run_dir: Path, diagnostics: dict) -> None:
    _write_text_atomic(
        run_dir / DIAGNOSTICS_FILE, json.dumps(diagnostics, indent=2, sort_keys=True) + "\n"
    )


def stage_outputs_present(run_dir: Path, stage: str) -> bool:
    return all((run_dir / rel).is_file() for rel in STAGE_OUTPUTS[stage])


def run_stage(cfg: RunConfig, run_dir: Path, stage: str, force: bool = False) -> bool:
    """Execute one stage unless its outputs already exist. Returns True if it ran."""
    if not force and stage_outputs_present(run_dir, stage):
        return False
    diag = STAGE_FUNCS[stage](cfg, run_dir)
    diagnostics = _read_diagnostics(run_dir)
    diagnostics[stage] = diag
    _write_diagnostics(run_dir, diagnostics)
    return True


def _manifest_inputs(cfg: RunConfig) -> dict[str, str]:
    inputs = {"dataset": sha256_file(cfg.dataset)}
    if cfg.stopwords:
        inputs["stopwords"] = sha256_file(cfg.stopwords)
    if Path(cfg.embedding_cache).is_file():
        inputs["embedding_cache"] = sha256_file(cfg.embedding_cache)
    if cfg.fixtures_dir:
        root = Path(cfg.fixtures_dir)
        for file in sorted(p for p in root.rglob("*") if p.is_file()):
            inputs[f"fixtures/{file.relative_to(root)}"] = sha256_file(file)
    return inputs


def write_manifest(
    cfg: RunConfig, run_dir: Path, digest: str, raw_config: dict | None, started_at: str
) -> None:
    outputs = {}
    for stage in STAGES:
        for rel in STAGE_OUTPUTS[stage]:
            path = run_dir / rel
            if path.is_file():
                outputs[rel] = sha256_file(path)
    manifest = {
        "tool_version": __version__,
        "config_digest": digest,
        "config": raw_config,
        "inputs": _manifest_inputs(cfg),
        "outputs": outputs,
        "diagnostics": _read_diagnostics(run_dir),
        "started_at": started_at,
        "finished_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    _write_text_atomic(run_dir / MANIFEST_FILE, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def verify_manifest(run_dir: Path) -> None:
    """Re-hash every output file and compare against the manifest."""
    manifest = json.loads((run_dir / MANIFEST_FILE).read_text(encoding="utf-8"))
    for rel, expected in manifest["outputs"].items():
        actual = sha256_file(run_dir / rel)
        if actual != expected:
            raise PoolrankError(f"manifest hash mismatch for {rel}: {actual} != {expected}")


def run(
    cfg: RunConfig,
    digest: str,
    raw_config: dict | None = None,
    run_dir: Path | None = None,
    stages: Sequence[str] = STAGES,
) -> Path:
    """Execute the requested stages, resuming over existing outputs, then
    write the manifest. Returns the run directory."""
    run_dir = Path(run_dir) if run_dir else Path(cfg.run_root) / digest
    run_dir.mkdir(parents=True, exist_ok=True)
    started_at = datetime.datetime.now(datetime.timezone.utc).isoformat()
    with RunLock(run_dir):
        for stage in stages:
            run_stage(cfg, run_dir, stage)
        write_manifest(cfg, run_dir, digest, raw_config, started_at)
    return run_dir
