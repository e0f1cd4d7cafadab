# tools/rng.py
"""Seeded random streams.

Every draw in the package goes through a Philox generator (counter based,
64-bit keyed), so a seed fully determines an experiment.
"""
from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[int, np.integer, np.random.Generator]


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(int(seed)))


def derive_seed(base: int, *keys: int) -> int:
    """64-bit child seed for (base, *keys); stable across platforms."""
    seq = np.random.SeedSequence([int(base), *(int(k) for k in keys)])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def split_seed(seed: int, n_streams: int) -> list[int]:
    return [derive_seed(seed, k) for k in range(n_streams)]
