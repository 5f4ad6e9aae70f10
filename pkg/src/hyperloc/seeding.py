"""Deterministic seed derivation.

Every sampling routine in the package is seeded by a 64-bit integer.  When a
routine needs several independent streams (one per replica, per sample, per
scan row) it derives child seeds with :func:`derive_seed`; the rule is fixed
so that identical (seed, index) pairs give identical streams on every run.
"""

from __future__ import annotations

import numpy as np

__all__ = ["derive_seed", "rng_from_seed"]


def derive_seed(seed: int, index: int) -> int:
    """Derive the child seed for stream ``index`` from a base seed.

    The splitting rule is ``SeedSequence(seed, spawn_key=(index,))``, hashed
    down to one unsigned 64-bit word.  It is stable across processes and
    platforms for a fixed numpy version.
    """
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
    if index < 0:
        raise ValueError(f"stream index must be nonnegative, got {index!r}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def rng_from_seed(seed: int) -> np.random.Generator:
    """A fresh PCG64 generator for a 64-bit seed."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
    return np.random.default_rng(int(seed))
