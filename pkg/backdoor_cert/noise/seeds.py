"""
Deterministic seed derivation.

Every random draw in the package comes from a Philox generator whose 64-bit
seed is derived from the run's master seed, a stream tag and the indices of
the draw (classifier, example, ...). Seeds never depend on execution order,
so any degree of parallelism reproduces the same numbers.
"""

from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    TRAIN_FEATURES = 1
    TRAIN_LABELS = 2
    TRAIN_INIT = 3
    TEST = 4
    SUBSET = 5
    POISON = 6


def derive_seed(master_seed: int, stream: Stream, *indices: int) -> int:
    """64-bit seed for the draw identified by (master_seed, stream, indices)"""
    if master_seed < 0 or any(i < 0 for i in indices):
        raise ValueError("seeds and indices must be nonnegative")
    sequence = np.random.SeedSequence([int(master_seed), int(stream), *map(int, indices)])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator for a 64-bit seed"""
    return np.random.Generator(np.random.Philox(seed))
