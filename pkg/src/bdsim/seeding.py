"""Deterministic seed derivation, independent of execution order."""

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def derive_seed(*parts):
    """A 63-bit seed that depends only on the integer ``parts``."""
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def splitmix64(x):
    """Vectorized splitmix64 finalizer over a uint64 array."""
    z = np.asarray(x, dtype=np.uint64) + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def sample_hash(seed, indices):
    """Per-sample 64-bit hashes of ``(seed, index)``."""
    idx = np.atleast_1d(np.asarray(indices, dtype=np.uint64))
    with np.errstate(over="ignore"):
        key = splitmix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
        return splitmix64(key ^ splitmix64(idx))
