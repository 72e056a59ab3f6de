"""Stateless counter-based randomness: splitmix64 hashing of (seed, stream, t, i)."""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def mix64(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _C1
    z = (z ^ (z >> np.uint64(27))) * _C2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def stream_key(seed, stream):
    return mix64(np.uint64(seed) ^ mix64(np.uint64(stream)))


@njit(cache=True, inline="always")
def hash_u64(key, t, i):
    return mix64(key ^ mix64((np.uint64(t) << np.uint64(32)) | np.uint64(i)))


@njit(cache=True, inline="always")
def uniform(key, t, i):
    return np.float64(hash_u64(key, t, i) >> np.uint64(11)) * _INV53


@njit(cache=True)
def uniforms(key, t, n):
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        out[i] = uniform(key, t, i)
    return out


@njit(cache=True)
def bits(key, t, n):
    out = np.empty(n, dtype=np.uint8)
    for i in range(n):
        out[i] = np.uint8(hash_u64(key, t, i) >> np.uint64(63))
    return out


@njit(cache=True)
def labels(key, t, n, modulus):
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = np.int64(uniform(key, t, i) * modulus)
    return out
