"""Seed plumbing.

Every random operation accepts either an int seed, a ``SeedSequence`` or an
existing ``Generator``. Replicate seeds are derived from a master seed plus
an index path, so any cell of an experiment can be rerun on its own.
"""

from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derive_seed(master: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(p) for p in path))


def derive_rng(master: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *path))
