"""Deterministic 64-bit PRNG used for every shuffle in the pipeline.

The generator is SplitMix64: starting from a 64-bit seed, each draw is

    state = (state + 0x9E3779B97F4A7C15) mod 2^64
    z = state
    z = ((z XOR (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
    z = ((z XOR (z >> 27)) * 0x94D049BB133111EB) mod 2^64
    output = z XOR (z >> 31)

Fold assignment, plan shuffling, and per-epoch data order are all driven
by this recurrence so they can be reproduced from the documented seed in
any implementation, independent of numpy's generator internals.
"""

from __future__ import annotations

_MASK = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """SplitMix64 stream over a 64-bit state."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return (z ^ (z >> 31)) & _MASK

    def next_below(self, n: int) -> int:
        """Uniform draw in [0, n) by modulo reduction (bias < 2^-50 for desk-scale n)."""
        if n <= 0:
            raise ValueError(f"next_below requires n >= 1, got {n}")
        return self.next_u64() % n


def shuffle(items: list, seed: int) -> list:
    """Return a Fisher-Yates shuffled copy of `items`, driven by SplitMix64(seed)."""
    out = list(items)
    rng = SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.next_below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def mix_seed(seed: int, *tags: int | str) -> int:
    """Derive a child seed from a master seed and a sequence of tags.

    Each tag (string tags are hashed bytewise first) perturbs the state
    through one SplitMix64 output step, so distinct tag sequences give
    independent streams while staying reproducible.
    """
    state = seed & _MASK
    for tag in tags:
        if isinstance(tag, str):
            h = 0xCBF29CE484222325  # FNV-1a over UTF-8 bytes
            for b in tag.encode("utf-8"):
                h = ((h ^ b) * 0x100000001B3) & _MASK
            tag = h
        state = SplitMix64(state ^ (tag & _MASK)).next_u64()
    return state
