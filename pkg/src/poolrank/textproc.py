"""Deterministic text primitives shared by rankers and metrics.

Content tokens are maximal ``[a-z0-9]+`` runs of the lowercased text, minus
stopwords, minus pure digit sequences. Tokenization, sentence splitting,
truncation and Jaccard are all pure functions.
"""

from __future__ import annotations

import re
from importlib import resources

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_DIGITS_RE = re.compile(r"[0-9]+\Z")
# split after a run of terminal punctuation when whitespace follows
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


def load_stopwords(path: str) -> frozenset[str]:
    """Read a one-word-per-line stopword file."""
    with open(path, encoding="utf-8") as f:
        return frozenset(w.strip() for w in f if w.strip())


def _default_stopwords() -> frozenset[str]:
    text = resources.files("poolrank").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


DEFAULT_STOPWORDS = _default_stopwords()


def token_list(text: str, stopwords: frozenset[str] | None = None) -> list[str]:
    """Content tokens in text order, duplicates kept (multiset for BM25)."""
    stop = DEFAULT_STOPWORDS if stopwords is None else stopwords
    return [
        t
        for t in _TOKEN_RE.findall(text.lower())
        if t not in stop and not _DIGITS_RE.match(t)
    ]


def tokenize(text: str, stopwords: frozenset[str] | None = None) -> frozenset[str]:
    """Content token set: lowercased alphanumeric runs minus stopwords and pure digits."""
    return frozenset(token_list(text, stopwords))


def split_sentences(text: str) -> list[str]:
    """Split on runs of terminal punctuation followed by whitespace; trims and drops empties."""
    parts = _SENTENCE_SPLIT_RE.split(text)
    return [p for p in (part.strip() for part in parts) if p]


def truncate_chars(text: str, limit: int) -> str:
    """First ``limit`` code points, no word-boundary adjustment."""
    if limit < 1:
        raise ValueError("limit must be >= 1")
    return text[:limit]


def jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    """|a∩b| / |a∪b|; 0.0 when both sets are empty."""
    union = len(a | b)
    if union == 0:
        return 0.0
    return len(a & b) / union
