"""Deterministic random streams derived from integer key paths.

Every stochastic component takes explicit seeds; streams for distinct key
paths are statistically independent and reproducible across platforms.
"""

import numpy as np


def seed_sequence(*keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(k) for k in keys])


def make_rng(*keys: int) -> np.random.Generator:
    """Generator seeded by the given key path."""
    return np.random.Generator(np.random.PCG64(seed_sequence(*keys)))


def derive_seed(*keys: int) -> int:
    """Stable child seed for a key path, e.g. (global_seed, input_index)."""
    return int(seed_sequence(*keys).generate_state(1, dtype=np.uint32)[0])
