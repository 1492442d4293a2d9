"""Seeded random streams.

Every stochastic routine takes an explicit ``numpy.random.Generator``.
Streams are keyed by (seed, run, path, purpose) and backed by Philox, a
counter-based bit generator, so replicates are independent and
reproducible regardless of execution order.
"""
from __future__ import annotations

import hashlib

import numpy as np

PURPOSES = ("inner", "population", "eval", "init", "baseline", "misc")


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    digest = hashlib.sha256(str(part).encode()).digest()
    return int.from_bytes(digest[:4], "little")


def stream(seed: int, *key) -> np.random.Generator:
    """Independent generator for ``seed`` and an arbitrary key path."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def kernel_seed(rng: np.random.Generator) -> int:
    """Seed for a compiled kernel's internal generator, drawn from ``rng``."""
    return int(rng.integers(0, 2**31 - 1))
