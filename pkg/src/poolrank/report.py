"""Report emitters: agreement table, delta table, and per-K curve data.

Tables are tab-separated text; curve data is line-delimited JSON suitable
for plotting deltas against the selection budget. Each emitter has a
matching validator so downstream consumers can check the shape.
"""

from __future__ import annotations

import json
import math
import re
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import MissingAgreement, MissingComparisons, SchemaError
from .stats import DeltaRow, METRIC_NAMES

AGREEMENT_BUDGET = 3  # the report's Jaccard column is top-3

AGREEMENT_COLUMNS = (
    "model",
    "kendall_tau_bm25",
    "kendall_tau_mmr",
    "top3_jaccard_bm25",
    "top3_jaccard_mmr",
    "top3_jaccard_random",
    "n_clusters",
)

TABLE_COMPARISONS = ("mmr_minus_llm", "bm25_minus_llm", "llm_minus_random")

CURVE_COMPARISON = "mmr_minus_llm"

_DELTA_CELL_RE = re.compile(r"^[+-]\d+\.\d{3} \[[+-]?\d+\.\d{3},[+-]?\d+\.\d{3}\]$")


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def emit_agreement_table(
    agreement_rows: Iterable[Mapping],
    models: Sequence[str],
    path: str | Path,
) -> None:
    """Per-model means of Kendall tau vs BM25/MMR and top-3 Jaccard vs
    BM25/MMR/Random, one row per model."""
    by_pair: dict[tuple[str, str], dict[str, Mapping]] = {}
    for row in agreement_rows:
        if int(row["k"]) != AGREEMENT_BUDGET:
            continue
        by_pair.setdefault((row["ranker_a"], row["ranker_b"]), {})[row["cluster_id"]] = row

    lines = ["\t".join(AGREEMENT_COLUMNS)]
    for model in sorted(models):
        cells = [model]
        n_clusters = None
        for column_metric, baseline in (
            ("kendall_tau", "bm25"),
            ("kendall_tau", "mmr"),
            ("topk_jaccard", "bm25"),
            ("topk_jaccard", "mmr"),
            ("topk_jaccard", "random"),
        ):
            rows = by_pair.get((model, baseline))
            if not rows:
                raise MissingAgreement(f"no agreement rows for ({model}, {baseline}) at k={AGREEMENT_BUDGET}")
            ordered = [rows[cid][column_metric] for cid in sorted(rows)]
            cells.append(f"{_mean(ordered):.6f}")
            n_clusters = len(ordered)
        cells.append(str(n_clusters))
        lines.append("\t".join(cells))

    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def validate_agreement_table(path: str | Path) -> None:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or tuple(lines[0].split("\t")) != AGREEMENT_COLUMNS:
        raise SchemaError(str(path), 1, f"header must be {AGREEMENT_COLUMNS}")
    if len(lines) < 2:
        raise SchemaError(str(path), 1, "agreement table has no data rows")
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(AGREEMENT_COLUMNS):
            raise SchemaError(str(path), lineno, f"expected {len(AGREEMENT_COLUMNS)} cells")
        try:
            taus = [float(c) for c in cells[1:3]]
            jaccards = [float(c) for c in cells[3:6]]
            int(cells[6])
        except ValueError as exc:
            raise SchemaError(str(path), lineno, str(exc)) from exc
        if any(not -1.0 <= t <= 1.0 for t in taus):
            raise SchemaError(str(path), lineno, "kendall tau outside [-1, 1]")
        if any(not 0.0 <= j <= 1.0 for j in jaccards):
            raise SchemaError(str(path), lineno, "jaccard outside [0, 1]")


def _delta_cell(row: DeltaRow) -> str:
    d = row.delta
    return f"{d.mean_delta:+.3f} [{d.ci_low:.3f},{d.ci_high:.3f}]"


def _delta_index(delta_rows: Iterable[DeltaRow]) -> dict[tuple[str, str, str, int], DeltaRow]:
    return {(r.model, r.metric, r.comparison, r.k): r for r in delta_rows}


def delta_table_columns(table_ks: Sequence[int]) -> list[str]:
    return ["model", "metric"] + [
        f"{comparison}_k{k}" for k in table_ks for comparison in TABLE_COMPARISONS
    ]


def emit_delta_table(
    delta_rows: Sequence[DeltaRow],
    models: Sequence[str],
    table_ks: Sequence[int],
    path: str | Path,
) -> None:
    """Rows grouped by model and metric; three comparison columns per K."""
    index = _delta_index(delta_rows)
    lines = ["\t".join(delta_table_columns(table_ks))]
    for model in sorted(models):
        for metric in METRIC_NAMES:
            cells = [model, metric]
            for k in table_ks:
                for comparison in TABLE_COMPARISONS:
                    row = index.get((model, metric, comparison, k))
                    if row is None:
                        raise MissingComparisons(f"no delta for ({model}, {metric}, {comparison}, k={k})")
                    cells.append(_delta_cell(row))
            lines.append("\t".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def validate_delta_table(path: str | Path, table_ks: Sequence[int]) -> None:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    expected_header = delta_table_columns(table_ks)
    if not lines or lines[0].split("\t") != expected_header:
        raise SchemaError(str(path), 1, f"header must be {expected_header}")
    if len(lines) < 2:
        raise SchemaError(str(path), 1, "delta table has no data rows")
    seen_metrics: dict[str, set[str]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(expected_header):
            raise SchemaError(str(path), lineno, f"expected {len(expected_header)} cells")
        if cells[1] not in METRIC_NAMES:
            raise SchemaError(str(path), lineno, f"unknown metric {cells[1]!r}")
        for cell in cells[2:]:
            if not _DELTA_CELL_RE.match(cell):
                raise SchemaError(str(path), lineno, f"malformed delta cell {cell!r}")
        seen_metrics.setdefault(cells[0], set()).add(cells[1])
    for model, metrics in seen_metrics.items():
        if metrics != set(METRIC_NAMES):
            raise SchemaError(str(path), 1, f"model {model} missing metrics {set(METRIC_NAMES) - metrics}")


def emit_curve_data(
    delta_rows: Sequence[DeltaRow],
    models: Sequence[str],
    ks: Sequence[int],
    path: str | Path,
) -> None:
    """Figure data: one record per (metric, model, K) for the MMR-LLM deltas."""
    index = _delta_index(delta_rows)
    records = []
    for model in sorted(models):
        for metric in METRIC_NAMES:
            for k in sorted(ks):
                row = index.get((model, metric, CURVE_COMPARISON, k))
                if row is None:
                    raise MissingComparisons(f"no delta for ({model}, {metric}, {CURVE_COMPARISON}, k={k})")
                records.append(
                    {
                        "comparison": CURVE_COMPARISON,
                        "metric": metric,
                        "model": model,
                        "k": k,
                        "mean_delta": row.delta.mean_delta,
                        "ci_low": row.delta.ci_low,
                        "ci_high": row.delta.ci_high,
                    }
                )
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True) + "\n")


def validate_curve_data(path: str | Path, ks: Sequence[int]) -> None:
    required = {"comparison", "metric", "model", "k", "mean_delta", "ci_low", "ci_high"}
    seen: dict[tuple[str, str], set[int]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(str(path), lineno, str(exc)) from exc
            if set(record) != required:
                raise SchemaError(str(path), lineno, f"keys must be {sorted(required)}")
            if record["metric"] not in METRIC_NAMES:
                raise SchemaError(str(path), lineno, f"unknown metric {record['metric']!r}")
            if not all(math.isfinite(record[f]) for f in ("mean_delta", "ci_low", "ci_high")):
                raise SchemaError(str(path), lineno, "non-finite delta values")
            seen.setdefault((record["model"], record["metric"]), set()).add(int(record["k"]))
    if not seen:
        raise SchemaError(str(path), 1, "curve file has no records")
    for (model, metric), got_ks in seen.items():
        if got_ks != set(ks):
            raise SchemaError(str(path), 1, f"({model}, {metric}) covers K={sorted(got_ks)}, need {sorted(ks)}")
