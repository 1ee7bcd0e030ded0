#!/usr/bin/env python3
"""Regenerate the shipped fixtures: synthetic dataset, recorded mock-llm
responses, warmed embedding cache, and the run config that ties them together.

Everything is keyed by fixed seeds, so re-running this script reproduces the
fixture files byte-for-byte. The mock-llm policy prefers documents with more
query-token overlap plus a small seeded jitter, which makes its rankings
plausible but distinct from BM25.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from poolrank.corpus import build_pool, parse_cluster  # noqa: E402
from poolrank.embeddings import EmbeddingCache, source_key  # noqa: E402
from poolrank.rng import SplitMix64, hash64  # noqa: E402
from poolrank.textproc import split_sentences, tokenize  # noqa: E402

FIXTURES = REPO / "fixtures"

SAMPLE_SEED = 1
SHUFFLE_SEED = 2
RANDOM_SEED = 3
BOOTSTRAP_SEED = 4

EMBED_MODEL = "hash-v1"
EMBED_DIM = 32

TOPIC_WORDS = [
    ["wildfire", "evacuation", "firefighters", "blaze", "homes", "smoke", "drought", "canyon",
     "residents", "acres", "containment", "flames"],
    ["election", "ballot", "senator", "campaign", "voters", "polls", "recount", "margin",
     "turnout", "district", "incumbent", "runoff"],
    ["earthquake", "magnitude", "aftershock", "epicenter", "rescue", "rubble", "tremor",
     "seismic", "survivors", "collapse", "fault", "damage"],
    ["vaccine", "trial", "patients", "immunity", "doses", "efficacy", "placebo", "antibody",
     "regulator", "approval", "booster", "variant"],
    ["merger", "shareholders", "antitrust", "acquisition", "valuation", "regulators", "stock",
     "billion", "deal", "board", "takeover", "assets"],
    ["hurricane", "landfall", "storm", "surge", "evacuees", "coast", "winds", "flooding",
     "forecasters", "category", "gulf", "damage"],
    ["strike", "union", "workers", "wages", "negotiations", "contract", "picket", "factory",
     "walkout", "benefits", "overtime", "management"],
    ["spacecraft", "orbit", "launch", "astronauts", "mission", "capsule", "booster", "docking",
     "telemetry", "countdown", "payload", "reentry"],
    ["drought", "reservoir", "farmers", "irrigation", "crops", "rainfall", "restrictions",
     "harvest", "groundwater", "livestock", "shortage", "conservation"],
    ["verdict", "jury", "trial", "prosecutors", "defendant", "sentencing", "testimony",
     "appeal", "charges", "conviction", "courtroom", "evidence"],
    ["olympics", "athletes", "medal", "stadium", "records", "sprint", "podium", "qualifiers",
     "relay", "ceremony", "torch", "champion"],
    ["cyberattack", "ransomware", "hackers", "breach", "servers", "encryption", "passwords",
     "malware", "disclosure", "forensics", "outage", "patch"],
    ["glacier", "melting", "sediment", "expedition", "icecap", "fjord", "measurements",
     "warming", "elevation", "researchers", "survey", "retreat"],
    ["festival", "tickets", "headliner", "crowds", "venue", "organizers", "lineup", "stage",
     "vendors", "attendance", "security", "encore"],
]

FILLER_WORDS = [
    "officials", "reported", "confirmed", "announced", "described", "expected", "continued",
    "responded", "warned", "estimated", "observed", "gathered", "released", "statement",
    "yesterday", "morning", "evening", "local", "national", "emergency", "community",
    "witnesses", "agency", "spokesperson", "authorities", "investigation", "update",
]

CONNECTORS = ["the", "a", "of", "in", "on", "with", "after", "before", "near", "during"]

TERMINATORS = [".", ".", ".", "!", "?"]


def make_sentence(gen: SplitMix64, topic: list[str], n_words: int) -> str:
    words = []
    for _ in range(n_words):
        roll = gen.randbelow(10)
        if roll < 5:
            words.append(topic[gen.randbelow(len(topic))])
        elif roll < 8:
            words.append(FILLER_WORDS[gen.randbelow(len(FILLER_WORDS))])
        elif roll < 9:
            words.append(CONNECTORS[gen.randbelow(len(CONNECTORS))])
        else:
            # occasional digits / mixed tokens to exercise the digit filter
            words.append(str(gen.randbelow(90) + 10) if gen.randbelow(2) else "route66")
    words[0] = words[0].capitalize()
    return " ".join(words) + TERMINATORS[gen.randbelow(len(TERMINATORS))]


def make_source(gen: SplitMix64, topic: list[str], long: bool = False) -> str:
    n_sentences = 6 + gen.randbelow(4) if long else 2 + gen.randbelow(3)
    return " ".join(make_sentence(gen, topic, 8 + gen.randbelow(6)) for _ in range(n_sentences))


def make_dataset() -> list[dict]:
    records = []
    for i, topic in enumerate(TOPIC_WORDS):
        cid = f"c{i:02d}"
        gen = SplitMix64(hash64("fixture-dataset", cid))
        if i == 4:
            n_sources = 5  # too few usable sources: skipped
        elif i == 9:
            n_sources = 10  # three blanks below leave 7: skipped
        else:
            n_sources = 8 + gen.randbelow(4)
        sources = [make_source(gen, topic, long=(j % 4 == 0)) for j in range(n_sources)]
        if i == 9:
            sources[1] = "   "
            sources[4] = ""
            sources[6] = "\n\t"
        summary = " ".join(make_sentence(gen, topic, 9 + gen.randbelow(4)) for _ in range(2 + gen.randbelow(3)))
        records.append({"cluster_id": cid, "sources": sources, "summary": summary})
    return records


def hash_embedding(model: str, text: str, dim: int = EMBED_DIM) -> list[float]:
    gen = SplitMix64(hash64("hash-embed", model, text))
    raw = [gen.next_u64() / 2**63 - 1.0 for _ in range(dim)]
    norm = sum(x * x for x in raw) ** 0.5
    return [x / norm for x in raw]


def mock_llm_positions(pool, gen: SplitMix64) -> list[int]:
    query_tokens = tokenize(pool.query)
    scores = []
    for position, doc_index in enumerate(pool.presentation_order):
        overlap = len(tokenize(pool.documents[doc_index].text) & query_tokens)
        jitter = gen.randbelow(1000) / 1000.0
        scores.append((overlap + 0.8 * jitter, position))
    return [p for _, p in sorted(scores, key=lambda t: (-t[0], t[1]))]


def wrap_response(positions: list[int], style: int) -> str:
    body = json.dumps({"ranked_indices": positions})
    if style == 0:
        return body
    if style == 1:
        return f"```json\n{body}\n```"
    if style == 2:
        return f"Here is the ranking you asked for:\n{body}\nLet me know if you need anything else."
    return body + "\n"


def main() -> None:
    FIXTURES.mkdir(exist_ok=True)

    records = make_dataset()
    with open(FIXTURES / "dataset.jsonl", "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    pools = []
    for index, record in enumerate(records):
        cluster = parse_cluster(record, default_id=str(index))
        pool = build_pool(cluster, sample_seed=SAMPLE_SEED, shuffle_seed=SHUFFLE_SEED)
        if pool is not None:
            pools.append(pool)
    print(f"dataset: {len(records)} clusters -> {len(pools)} pools")

    responses_dir = FIXTURES / "responses" / "mock-llm"
    responses_dir.mkdir(parents=True, exist_ok=True)
    for pool in pools:
        gen = SplitMix64(hash64("mock-llm", pool.cluster_id))
        positions = mock_llm_positions(pool, gen)
        style = gen.randbelow(4)
        (responses_dir / f"{pool.cluster_id}.txt").write_text(
            wrap_response(positions, style), encoding="utf-8"
        )
    print(f"responses: {len(pools)} recorded completions")

    cache_path = FIXTURES / "embeddings.jsonl"
    if cache_path.exists():
        cache_path.unlink()
    cache = EmbeddingCache(cache_path)
    texts = []
    for pool in pools:
        texts.extend(pool.doc_texts())
        texts.extend(split_sentences(pool.summary))
    for text in texts:
        key = source_key(EMBED_MODEL, text)
        if key not in cache:
            cache.put(key, EMBED_MODEL, hash_embedding(EMBED_MODEL, text))
    cache.flush()
    print(f"embedding cache: {len(cache)} vectors (dim {EMBED_DIM})")

    config = {
        "dataset": "dataset.jsonl",
        "rankers": ["bm25", "mmr", "random", "replay:mock-llm"],
        "pool": {"min_sources": 8, "snippet_chars": 600, "query_chars": 400},
        "seeds": {
            "sample": SAMPLE_SEED,
            "shuffle": SHUFFLE_SEED,
            "random_ranker": RANDOM_SEED,
            "bootstrap": BOOTSTRAP_SEED,
        },
        "mmr_lambda": 0.7,
        "fixtures_dir": "responses",
        "embedding_model": EMBED_MODEL,
        "embedding_cache": "embeddings.jsonl",
        "ks": [3, 4, 5, 6],
        "table_ks": [3, 5],
        "resamples": 10000,
        "ci_level": 0.95,
        "offline": True,
        "run_root": "../runs",
    }
    (FIXTURES / "config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print("config: fixtures/config.json")


if __name__ == "__main__":
    main()
