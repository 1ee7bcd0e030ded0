"""Deterministic randomness primitives.

Every stochastic step in the harness is keyed by ``hash64(seed, *context)``
so repeated runs agree bit-for-bit and adding one keyed draw never perturbs
another. Per-cluster shuffles use an in-repo SplitMix64 (counter-based, exact
uint64 arithmetic, no third-party stream dependency); the bootstrap uses
numpy's counter-based Philox for throughput.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def hash64(*parts: object) -> int:
    """Stable 64-bit key from a sequence of values (str/int/float/...)."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        data = str(part).encode("utf-8")
        h.update(len(data).to_bytes(4, "big"))
        h.update(data)
    return int.from_bytes(h.digest(), "big")


class SplitMix64:
    """Counter-based 64-bit generator (Steele et al. constants)."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def randbelow(self, n: int) -> int:
        """Unbiased draw from [0, n) by rejection."""
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < threshold:
                return u % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]


def keyed_permutation(n: int, key: int) -> list[int]:
    """Fisher-Yates permutation of range(n) determined solely by ``key``."""
    items = list(range(n))
    SplitMix64(key).shuffle(items)
    return items


def philox(key: int) -> np.random.Generator:
    """Counter-based bulk generator keyed by a 64-bit value."""
    return np.random.Generator(np.random.Philox(key=key & _MASK64))
