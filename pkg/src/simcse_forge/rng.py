"""Deterministic random number generation.

The repo-wide generator is SplitMix64: a 64-bit counter advanced by the
golden-ratio increment 0x9E3779B97F4A7C15, with each output produced by a
fixed xor-shift/multiply finalizer. The same seed yields the same stream of
draws on every platform (all arithmetic is modulo 2**64), which is what makes
dropout masks and data shuffles reproducible bit-for-bit.

Draws are vectorized over numpy uint64 arrays, so sampling a million-unit
dropout mask costs one array pass instead of a Python loop.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _finalize(states: np.ndarray) -> np.ndarray:
    z = states
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class Rng:
    """SplitMix64 stream. One instance = one sequentially consumed stream."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def _raw(self, n: int) -> np.ndarray:
        """Next n 64-bit outputs as a uint64 array."""
        offsets = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GOLDEN)
        with np.errstate(over="ignore"):
            out = _finalize(np.uint64(self._state) + offsets)
        self._state = (self._state + n * _GOLDEN) & _MASK64
        return out

    def uniform(self, shape=()) -> np.ndarray:
        """Uniform draws in [0, 1) with 53-bit resolution."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return u.reshape(shape) if shape else u[0]

    def normal(self, shape=(), mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """Gaussian draws via Box-Muller on consecutive uniform pairs."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        m = (n + 1) // 2
        raw = self._raw(2 * m)
        # u1 in (0, 1] so the log is finite
        u1 = ((raw[:m] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (raw[m:] >> np.uint64(11)).astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        z = mean + std * z
        return z.reshape(shape) if shape else z[0]

    def bernoulli(self, keep_prob, shape=()) -> np.ndarray:
        """0/1 mask; entry is 1 with probability keep_prob (scalar or array)."""
        keep = np.asarray(keep_prob, dtype=np.float64)
        u = self.uniform(shape if shape else keep.shape)
        return (u < keep).astype(np.float64)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        n = len(items)
        if n < 2:
            return
        u = self.uniform((n - 1,))
        for i in range(n - 1, 0, -1):
            j = int(u[n - 1 - i] * (i + 1))
            items[i], items[j] = items[j], items[i]
