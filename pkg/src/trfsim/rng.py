"""Seed handling.

All randomness in the toolkit flows from one 64-bit seed through named
sub-streams, so adding a consumer (say, a new sampler) never perturbs the
draws of an existing one.
"""

import hashlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for (seed, name), stable across runs and platforms."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    ss = np.random.SeedSequence(entropy=[int(seed) & (2**64 - 1), *words])
    return np.random.default_rng(ss)
