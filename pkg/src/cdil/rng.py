"""Portable seeded randomness for every stochastic step in the benchmark.

The generator is xoshiro256** (Blackman & Vigna), a 64-bit xorshift-family
generator with a 256-bit state, seeded by expanding a single 64-bit seed
through splitmix64. It is implemented here in plain Python so that fold
assignments, synthetic streams, and learner randomness are reproducible
across platforms and library versions; the platform `random` module and
numpy's default streams are never used.

Substreams are derived by hashing an ordered tuple of purpose tags
(experiment seed, session index, protocol name, ...) with SHA-256 and
taking the first 8 bytes as the child seed. Distinct tag tuples therefore
give statistically independent streams, and re-running with the same tags
reproduces every draw.
"""

from __future__ import annotations

import hashlib
import math
from typing import MutableSequence

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF

SeedPart = int | str


def derive_seed(*parts: SeedPart) -> int:
    """Hash an ordered tuple of tags into a 64-bit substream seed."""
    h = hashlib.sha256()
    for part in parts:
        raw = str(part).encode("utf-8")
        h.update(len(raw).to_bytes(4, "big"))
        h.update(raw)
    return int.from_bytes(h.digest()[:8], "big")


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256StarStar:
    """xoshiro256** seeded from a single 64-bit integer via splitmix64."""

    __slots__ = ("_s0", "_s1", "_s2", "_s3", "_spare")

    def __init__(self, seed: int):
        state = seed & _MASK64
        state, self._s0 = _splitmix64(state)
        state, self._s1 = _splitmix64(state)
        state, self._s2 = _splitmix64(state)
        state, self._s3 = _splitmix64(state)
        if self._s0 == self._s1 == self._s2 == self._s3 == 0:
            self._s0 = 1  # all-zero state is the one invalid seeding
        self._spare: float | None = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return result

    def random(self) -> float:
        """Uniform float64 in [0, 1), using the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection sampling."""
        if n <= 0:
            raise ValueError("randbelow requires n >= 1")
        limit = _MASK64 - (_MASK64 % n) - (n - 1)  # largest multiple of n, minus 1
        while True:
            value = self.next_u64()
            if value <= limit + (n - 1):
                return value % n

    def shuffle(self, items: MutableSequence) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def normal(self) -> float:
        """Standard normal draw (Box-Muller, spare value cached)."""
        if self._spare is not None:
            z = self._spare
            self._spare = None
            return z
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53  # (0, 1]
        u2 = (self.next_u64() >> 11) * 2.0**-53
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare = r * math.sin(theta)
        return r * math.cos(theta)

    def normals(self, shape: int | tuple[int, ...]) -> np.ndarray:
        """Array of standard normal draws in row-major fill order."""
        out = np.empty(shape, dtype=np.float64)
        flat = out.reshape(-1)
        for i in range(flat.size):
            flat[i] = self.normal()
        return out


def substream(*parts: SeedPart) -> Xoshiro256StarStar:
    """Generator for the substream identified by the given tag tuple."""
    return Xoshiro256StarStar(derive_seed(*parts))
