"""Seed derivation for reproducible, order-independent trials."""

import numpy as np

_MASK64 = (1 << 64) - 1


def mix64(seed, stream=0):
    """SplitMix64 finalizer applied to ``seed + golden * (stream + 1)``.

    Maps a 64-bit master seed and a stream index (trial number) to a
    well-spread 64-bit value, so trial ``i`` gets the same generator no
    matter which worker runs it or in what order.
    """
    z = (int(seed) + 0x9E3779B97F4A7C15 * (int(stream) + 1)) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def make_rng(seed=None, stream=0):
    """Counter-based (Philox) generator keyed by ``mix64(seed, stream)``.

    Passing an existing ``np.random.Generator`` returns it unchanged.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        return np.random.Generator(np.random.Philox())
    return np.random.Generator(np.random.Philox(key=mix64(seed, stream)))
