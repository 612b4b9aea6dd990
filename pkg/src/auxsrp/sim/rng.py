"""Seeded, platform-stable random generators (Philox counter-based bit generator)."""

from __future__ import annotations

import numpy as np


def make_rng(*keys: int) -> np.random.Generator:
    """Generator keyed by a tuple of non-negative integers, e.g. (master_seed, scenario)."""
    if not keys:
        raise ValueError("at least one seed key is required")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in keys])))


def derive_seed(*keys: int) -> int:
    """Stable 32-bit integer seed for a tuple of non-negative keys."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1, dtype=np.uint32)[0])
