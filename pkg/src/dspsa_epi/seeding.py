"""Deterministic seed derivation.

Every stream seed is derived from a master seed and a counter by the
SplitMix64 finaliser::

    z = (base + (counter + 1) * 0x9E3779B97F4A7C15) mod 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    z =  z ^ (z >> 31)

so results do not depend on any global generator or on the platform.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

# Domain tags keep the derived streams of one master seed apart.
TAG_PERTURBATION = 0x50455254  # "PERT"
TAG_TRIAL = 0x545249414C  # "TRIAL"
TAG_CI = 0x4349  # "CI"
TAG_BASELINE = 0x42415345  # "BASE"
TAG_PROBE = 0x50524F42  # "PROB"
TAG_TUNE = 0x54554E45  # "TUNE"


def mix64(base: int, counter: int) -> int:
    """Map ``(base, counter)`` to a well-mixed 64-bit unsigned seed."""
    z = (int(base) + (int(counter) + 1) * GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def substream(base: int, tag: int) -> int:
    return mix64(mix64(base, tag), 0)


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))


def fold32(seed: int) -> int:
    """Fold a 64-bit seed into the 32-bit range numba's generator accepts."""
    s = int(seed) & MASK64
    return (s ^ (s >> 32)) & 0xFFFFFFFF


def mix64_array(base: int, counters: np.ndarray) -> np.ndarray:
    """Vectorised :func:`mix64` over an array of counters (uint64 result)."""
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(int(base) & MASK64) + (c + np.uint64(1)) * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def fold32_array(seeds: np.ndarray) -> np.ndarray:
    s = np.asarray(seeds, dtype=np.uint64)
    return ((s ^ (s >> np.uint64(32))) & np.uint64(0xFFFFFFFF)).astype(np.int64)
