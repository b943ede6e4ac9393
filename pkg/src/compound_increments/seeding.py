"""Seed streams.

Every random draw in the package comes from ``rng_for(root, *counters)``:
the root seed and a tuple of nonnegative integer counters (experiment tag,
replication index, block index, ...) are fed to ``numpy.random.SeedSequence``
as one entropy vector.  Distinct counter tuples give statistically
independent streams, and a given tuple always gives the same stream, so
results do not depend on how tasks are scheduled across workers.
"""
from __future__ import annotations

import numpy as np

__all__ = ["rng_for", "child_seed"]

# counter tags so different operations never share a stream by accident
TAG_BATCH = 1
TAG_POISSON = 2
TAG_COUPLING = 3
TAG_OSCILLATION = 4
TAG_CLUSTERING = 5
TAG_NW = 6
TAG_LDP = 7
TAG_LOCAL = 8
TAG_DISCREPANCY = 9
TAG_ACCEPT = 10


def _entropy(seed, counters):
    seed = int(seed)
    if seed < 0:
        raise ValueError("seeds must be nonnegative")
    return [seed, *(int(c) for c in counters)]


def rng_for(seed: int, *counters: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(_entropy(seed, counters))))


def child_seed(seed: int, *counters: int) -> int:
    """A 63-bit integer seed derived from ``(seed, *counters)``."""
    state = np.random.SeedSequence(_entropy(seed, counters)).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)
