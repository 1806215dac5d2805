"""Pinned pseudo-random streams: splitmix64-seeded xoshiro256++.

Gaussian variates use the Box-Muller transform on pairs of uniforms; each
call to :meth:`Stream.normal` consumes ``ceil(size / 2)`` pairs and drops
any unused second variate, so the stream position depends only on the
sequence of requested sizes.
"""

from __future__ import annotations

import numpy as np

from . import _kernels

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# substream tags; a run derives every stream from (seed, tag)
TAG_SYSTEM = 1
TAG_INITIAL = 2
TAG_NOISE = 3
TAG_CERTIFY = 4
TAG_CHECKS = 5  # draws for randomized property checks
TAG_PROBE = 6


def splitmix64(x: int) -> tuple[int, int]:
    """One splitmix64 step.

    Returns
    -------
    (new_state, output) : tuple of int
    """
    x = (x + _GOLDEN) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return x, z ^ (z >> 31)


def derive_seed(seed: int, tag: int) -> int:
    """Mix a user seed and a stream tag into a 64-bit splitmix seed."""
    _, a = splitmix64(int(seed) & _MASK)
    _, b = splitmix64((a ^ (tag * 0xD1B54A32D192ED03)) & _MASK)
    return b


class Stream:
    """A xoshiro256++ stream.

    Parameters
    ----------
    seed : int
        64-bit seed (negative values are reduced mod 2**64).
    tag : int, optional
        Substream tag mixed into the seed; ``None`` uses ``seed`` directly.
    """

    def __init__(self, seed: int, tag: int | None = None):
        x = int(seed) & _MASK if tag is None else derive_seed(seed, tag)
        words = []
        for _ in range(4):
            x, out = splitmix64(x)
            words.append(out)
        if not any(words):  # all-zero state is a fixed point
            words[0] = 1
        self.state = np.array(words, dtype=np.uint64)

    def uniform(self, size: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Draw ``size`` variates uniform on the open interval (low, high)."""
        u = _kernels.xoshiro_uniforms(self.state, int(size))
        if low == 0.0 and high == 1.0:
            return u
        return low + (high - low) * u

    def normal(self, size: int) -> np.ndarray:
        """Draw ``size`` standard-normal variates by Box-Muller."""
        size = int(size)
        pairs = (size + 1) // 2
        u = _kernels.xoshiro_uniforms(self.state, 2 * pairs)
        r = np.sqrt(-2.0 * np.log(u[0::2]))
        theta = 2.0 * np.pi * u[1::2]
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:size]

    def normal_matrix(self, rows: int, cols: int) -> np.ndarray:
        """Row-by-row Gaussian matrix; each row is one :meth:`normal` call."""
        out = np.empty((rows, cols))
        for i in range(rows):
            out[i] = self.normal(cols)
        return out
