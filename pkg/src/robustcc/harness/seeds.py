"""Seed derivation.

``mix(seed, i) = splitmix64((seed + i * 0x9E3779B97F4A7C15) mod 2**64)`` where
``splitmix64`` is the standard SplitMix64 output function.  Every random
choice in a test case draws from a ``random.Random`` seeded with a sub-seed of
the case seed, so a case replays from its seed alone.
"""

from __future__ import annotations

import random

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix(seed: int, i: int) -> int:
    return splitmix64((seed + i * GOLDEN) & MASK64)


def rng_for(seed: int, i: int) -> random.Random:
    return random.Random(mix(seed, i))


# sub-seed indices used by the harness
GEN, CONTEXT, MUTATE, SPLIT, PARAMS = range(5)
