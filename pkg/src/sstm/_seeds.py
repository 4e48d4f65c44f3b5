"""Seed plumbing: tagged substreams so independent consumers never collide.

Seeds may be plain ints or tuples of ints (e.g. ``(study_seed, replicate)``);
each consumer appends its own tag before building the SeedSequence.
"""

from __future__ import annotations

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF


def seed_entropy(seed) -> list[int]:
    parts = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    return [int(s) & _MASK for s in parts]


def seed_sequence(seed, *tags) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed_entropy(seed) + [int(t) & _MASK for t in tags])
