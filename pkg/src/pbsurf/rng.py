"""Seed splitting.

Every random stream is derived from the single scenario seed as
``SeedSequence(seed, spawn_key=(crc32(stream), index))``, so streams are
independent of each other and of evaluation order (threads may draw samples
in any order).
"""
import zlib

import numpy as np


def child_seed(seed: int, stream: str, index: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(stream.encode()), int(index)))


def child_rng(seed: int, stream: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(child_seed(seed, stream, index))


def as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)
