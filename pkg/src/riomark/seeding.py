"""Named, deterministic random substreams derived from one user seed.

Every consumer of randomness asks for a stream by name. The name maps to a
fixed integer spawn key, so a stream's output depends only on (seed, name,
extra keys) and never on call order or on how many other streams exist.

    stream                 spawn key
    train_shuffle          (1,)
    cv_folds               (2,)
    holdout_split          (3,)
    mc_c_given_w           (4, block)
    mc_w_given_c           (5, block)
    synthetic              (6, ...)
"""

from __future__ import annotations

import numpy as np

STREAMS = {
    "train_shuffle": 1,
    "cv_folds": 2,
    "holdout_split": 3,
    "mc_c_given_w": 4,
    "mc_w_given_c": 5,
    "synthetic": 6,
}


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = (STREAMS[name], *extra)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))
