"""Counter-based random substreams.

Every random quantity in an experiment is drawn from a Philox stream keyed by
``(master_seed, *key)``.  Keys encode the grid cell, the replication index and
the purpose of the draw, so results never depend on scheduling or on how many
workers share the work.
"""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np

SeedLike = Union[int, Sequence[int], np.random.SeedSequence, np.random.Generator]

# purpose tags (last component of a substream key)
SIGNAL = 0
NOISE = 1
POSTERIOR = 2
PRIOR = 3
DIAGNOSTIC = 4
SET_BASE = 16


def substream(master_seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Turn any accepted seed form into a generator.

    An int or a tuple ``(master, *key)`` map onto :func:`substream`; an
    existing generator is passed through untouched.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    if isinstance(seed, (int, np.integer)):
        return substream(int(seed))
    seed = tuple(seed)
    if not seed:
        raise ValueError("empty seed tuple")
    return substream(seed[0], *seed[1:])
