"""Named, independent random substreams derived from one run seed.

Every stochastic consumer (weight init, epoch shuffling, masks, Gibbs
sampling, evaluation) draws from its own substream so that, e.g., turning
a regularizer on or off never perturbs the data order of the same seed.
"""

import numpy as np

STREAM_INIT = 0
STREAM_SHUFFLE = 1
STREAM_MASK = 2
STREAM_GIBBS = 3
STREAM_EVAL = 4


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream identified by `key` under `seed`."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))
