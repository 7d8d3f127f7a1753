"""Deterministic random streams.

Every random draw in a run comes from a generator derived from
``(master seed, iteration, purpose)``.  Row ``i`` of a block drawn from such a
stream belongs to agent ``i``, so results never depend on the order in which
agents are processed.
"""
import numpy as np

PURPOSES = {
    "noise": 1,
    "compress": 2,
    "init": 3,
    "graph": 4,
    "game": 5,
    "sample": 6,
}


def stream(seed, iteration, purpose):
    """Return a fresh generator for one ``(seed, iteration, purpose)`` cell."""
    try:
        tag = PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown stream purpose {purpose!r}") from None
    ss = np.random.SeedSequence([int(seed), int(iteration), tag])
    return np.random.Generator(np.random.PCG64(ss))
