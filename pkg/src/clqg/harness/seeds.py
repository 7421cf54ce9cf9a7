"""Replica seed derivation.

derive_seed(master, i) is the SplitMix64 output for the state
``master + (i + 1) * 0x9E3779B97F4A7C15 (mod 2^64)``:

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9   (mod 2^64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB   (mod 2^64)
    z =  z ^ (z >> 31)

The finaliser is a bijection of 64-bit words, so distinct indices under one
master never collide.
"""

from __future__ import annotations

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, replica_index: int) -> int:
    if replica_index < 0:
        raise ValueError("replica index must be nonnegative")
    return mix64((int(master) + (int(replica_index) + 1) * GOLDEN) & MASK64)
