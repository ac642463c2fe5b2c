"""Deterministic seed derivation so results do not depend on execution order."""

import numpy as np


def derive_seed(seed: int, *keys: int) -> int:
    """A 32-bit seed derived from ``seed`` and an integer path of ``keys``."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(ss)


def as_generator(random_state=None):
    """Accept None, an int seed, a Generator or a legacy RandomState."""
    if isinstance(random_state, (np.random.Generator, np.random.RandomState)):
        return random_state
    return np.random.default_rng(random_state)
