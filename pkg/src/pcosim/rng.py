"""Seeding helpers.

All randomness flows through the counter-based Philox generator so trials
are reproducible bit-for-bit from (base seed, trial index).  The algorithm
identifier is recorded in experiment outputs.
"""

from __future__ import annotations

import numpy as np

RNG_ALGORITHM = "philox4x64-10"


def make_generator(seed) -> np.random.Generator:
    """Generator from an int seed or a prepared SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        seq = seed
    else:
        seq = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seq))


def trial_seed(base: int, index: int) -> np.random.SeedSequence:
    """Deterministic per-trial seed derived from the base seed."""
    return np.random.SeedSequence(entropy=int(base), spawn_key=(int(index),))
