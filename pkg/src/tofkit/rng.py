"""Seeded random substreams.

All randomness in the toolkit flows from a single 64-bit seed through named
substreams, so toggling one pipeline stage (e.g. augmentation) does not shift
the random draws of another (e.g. scene generation).
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "derive_seed"]


def _key(part: str | int) -> int:
    if isinstance(part, str):
        # crc32 is stable across platforms and Python versions
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFF


def substream(seed: int, *parts: str | int) -> np.random.Generator:
    """Generator for substream (seed, *parts); same arguments, same stream."""
    keys = tuple(_key(p) for p in parts)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=keys)))


def derive_seed(seed: int, *parts: str | int) -> int:
    """Stable 63-bit child seed for APIs that take an integer seed."""
    keys = tuple(_key(p) for p in parts)
    state = np.random.SeedSequence(seed, spawn_key=keys).generate_state(1, np.uint64)[0]
    return int(state >> np.uint64(1))
