"""Seedable, splittable random streams.

Every stochastic consumer asks for a stream by ``(seed, tag, index)``; the
stream is a PCG64 generator seeded from a SeedSequence over the seed, a
stable hash of the tag and the index, so streams never depend on call order.
"""

from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def tag_hash(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, tag: str = "", index: int = 0) -> np.random.Generator:
    seed = int(seed) & MASK64
    entropy = [seed & 0xFFFFFFFF, seed >> 32, tag_hash(tag), int(index) & 0xFFFFFFFF]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
