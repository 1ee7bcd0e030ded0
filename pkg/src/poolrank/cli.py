"""Command-line entry point.

Subcommands mirror the pipeline stages (`pools`, `rank`, `score`, `compare`,
`report`) plus `run` for all of them. `pools` and `rank` also work without a
config file when given their direct flags, for ad-hoc use.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import PoolParams, RunConfig, Seeds, load_config
from .corpus import build_pool, load_pools, parse_cluster, save_pools
from .errors import PoolrankError
from .gateway_client import GatewayClient
from .rankers import FixtureStore, rank_pools_llm, ranking_to_dict
from .runner import STAGES, rank_one_pool, run, write_jsonl_atomic
from .textproc import DEFAULT_STOPWORDS


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="run config file (json or yaml)")
    parser.add_argument("--run-dir", help="override the digest-named run directory")
    parser.add_argument("--offline", action="store_true", help="forbid network access")
    parser.add_argument("--sample-seed", type=int, help="override seeds.sample")
    parser.add_argument("--shuffle-seed", type=int, help="override seeds.shuffle")
    parser.add_argument("--random-seed", type=int, help="override seeds.random_ranker")
    parser.add_argument("--bootstrap-seed", type=int, help="override seeds.bootstrap")


def _overrides_from(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    seeds = {}
    if args.sample_seed is not None:
        seeds["sample"] = args.sample_seed
    if args.shuffle_seed is not None:
        seeds["shuffle"] = args.shuffle_seed
    if args.random_seed is not None:
        seeds["random_ranker"] = args.random_seed
    if args.bootstrap_seed is not None:
        seeds["bootstrap"] = args.bootstrap_seed
    if seeds:
        overrides["seeds"] = seeds
    if args.offline:
        overrides["offline"] = True
    return overrides


def _run_stages(args: argparse.Namespace, stages: list[str]) -> int:
    cfg, digest, raw = load_config(args.config, _overrides_from(args))
    run_dir = run(cfg, digest, raw_config=raw, run_dir=args.run_dir, stages=stages)
    print(f"run directory: {run_dir}")
    return 0


def _cmd_pools_direct(args: argparse.Namespace) -> int:
    pools = []
    skipped = 0
    with open(args.input, encoding="utf-8") as f:
        for index, line in enumerate(f):
            if not line.strip():
                continue
            cluster = parse_cluster(json.loads(line), default_id=str(index))
            pool = build_pool(
                cluster,
                sample_seed=args.sample_seed,
                shuffle_seed=args.shuffle_seed,
                min_sources=args.min_sources,
                snippet_chars=args.snippet_chars,
                query_chars=args.query_chars,
            )
            if pool is None:
                skipped += 1
            else:
                pools.append(pool)
    pools.sort(key=lambda p: p.cluster_id)
    save_pools(pools, args.output)
    print(f"wrote {len(pools)} pools to {args.output} ({skipped} clusters skipped)")
    return 0


def _cmd_rank_direct(args: argparse.Namespace) -> int:
    rankers = args.rankers.split(",")
    # parameter carrier for rank_one_pool; not a validated run config
    cfg = RunConfig(
        dataset=args.pools,
        rankers=rankers,
        pool=PoolParams(),
        seeds=Seeds(random_ranker=args.seed),
        mmr_lambda=args.mmr_lambda,
        gateway_url=args.gateway_url,
        fixtures_dir=args.fixtures,
        max_inflight=args.max_inflight,
    )
    pools = load_pools(args.pools)
    fixtures = FixtureStore(args.fixtures) if args.fixtures else None
    rankings = []
    for pool in pools:
        rankings.extend(rank_one_pool(cfg, pool, DEFAULT_STOPWORDS, fixtures))
    llm_models = [r.partition(":")[2] for r in rankers if r.startswith("llm:")]
    if llm_models:
        client = GatewayClient(cfg.resolved_gateway_url())
        record_to = fixtures or FixtureStore(Path(args.output).parent / "responses")
        for model in llm_models:
            rankings.extend(
                rank_pools_llm(client, model, pools, max_inflight=args.max_inflight, record_to=record_to)
            )
    rankings.sort(key=lambda r: (r.cluster_id, r.ranker_id))
    write_jsonl_atomic(Path(args.output), [ranking_to_dict(r) for r in rankings])
    print(f"wrote {len(rankings)} rankings to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poolrank",
        description="Compare ranking policies over fixed 8-document evidence pools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_pools = sub.add_parser("pools", help="build standardized evidence pools")
    _add_common(p_pools)
    p_pools.add_argument("--input", help="dataset jsonl (one cluster record per line)")
    p_pools.add_argument("--output", help="pool file to write")
    p_pools.add_argument("--min-sources", type=int, default=8)
    p_pools.add_argument("--snippet-chars", type=int, default=600)
    p_pools.add_argument("--query-chars", type=int, default=400)

    p_rank = sub.add_parser("rank", help="rank pools with the configured rankers")
    _add_common(p_rank)
    p_rank.add_argument("--pools", help="pool file (direct mode)")
    p_rank.add_argument("--output", help="rankings file to write (direct mode)")
    p_rank.add_argument("--rankers", help="comma list: bm25,mmr,random,llm:<m>,replay:<m>")
    p_rank.add_argument("--lambda", dest="mmr_lambda", type=float, default=0.7)
    p_rank.add_argument("--seed", type=int, default=0, help="random-ranker seed (direct mode)")
    p_rank.add_argument("--gateway-url", help="gateway base url for llm rankers")
    p_rank.add_argument("--fixtures", help="recorded-response directory")
    p_rank.add_argument("--max-inflight", type=int, default=4)

    for stage in ("score", "compare", "report"):
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        _add_common(p)

    p_run = sub.add_parser("run", help="run all stages")
    _add_common(p_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "pools" and args.config is None:
            if not args.input or not args.output:
                raise SystemExit("pools: --input/--output required without --config")
            if args.sample_seed is None or args.shuffle_seed is None:
                raise SystemExit("pools: --sample-seed/--shuffle-seed required without --config")
            return _cmd_pools_direct(args)
        if args.command == "rank" and args.config is None:
            if not args.pools or not args.output or not args.rankers:
                raise SystemExit("rank: --pools/--output/--rankers required without --config")
            return _cmd_rank_direct(args)
        if args.config is None:
            raise SystemExit(f"{args.command}: --config is required")
        if args.command == "run":
            return _run_stages(args, list(STAGES))
        return _run_stages(args, [args.command])
    except PoolrankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
