"""Seeded, splittable random streams.

Every stochastic operation in this package takes an explicit
``numpy.random.Generator``.  Streams are built on the counter-based Philox
bit generator so that independent child streams can be split off
deterministically and runs are bit-reproducible from a single integer seed.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Build the root stream for a run from an integer seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def split(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Split ``n`` independent child streams off ``rng``.

    Splitting advances the parent's spawn key, not its value stream, so the
    parent remains usable afterwards.
    """
    return rng.spawn(n)
