"""Seeded random streams keyed by (seed, operation tag)."""

import zlib

import numpy as np


def rng_for(seed: int, tag: str) -> np.random.Generator:
    """Independent generator per operation so transforms never share a stream."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(tag.encode()),)))
