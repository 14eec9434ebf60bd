"""Counter-based random streams for the stochastic kernels.

Stream format "splitmix64/v1": a stream is a (key, counter) pair and the
i-th uniform is built from mix64(key + i * GOLDEN), where mix64 is the
splitmix64 finalizer (Steele, Lea and Flood 2014) and GOLDEN is the
64-bit golden-ratio increment. Keys derive from user seeds through an
extra mix so that replica streams seeded base, base+1, ... do not share
shifted counter ranges. Everything here is pure integer arithmetic, so
the same (seed, counter) always yields the same uniform, inside or
outside numba.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STREAM_VERSION = "splitmix64/v1"

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_SALT = np.uint64(0x243F6A8885A308D3)
_MASK = (1 << 64) - 1
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def derive_key(seed):
    # seed must already be a uint64
    return mix64((seed + _SALT) * GOLDEN)


@njit(cache=True, inline="always")
def u01(key, ctr):
    # uniform on [0, 1) with 53 random mantissa bits
    z = mix64(key + ctr * GOLDEN)
    return (z >> np.uint64(11)) * _INV53


def make_key(seed: int) -> np.uint64:
    """Derive the stream key for a non-negative integer seed."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    # numba boxes uint64 returns as python ints; re-wrap for dispatch
    return np.uint64(derive_key(np.uint64(seed & _MASK)))


def u01_array(seed: int, start: int, count: int) -> np.ndarray:
    """Uniforms at counters start..start+count-1 of the stream for seed."""
    key = make_key(seed)
    ctr = np.arange(start, start + count, dtype=np.uint64)
    z = key + ctr * GOLDEN
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)) * _INV53
