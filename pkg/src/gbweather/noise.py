"""Seeded value noise on an integer lattice, plus FBM and smoothstep.

The lattice corner values come from a splitmix64-style integer hash of
(ix, iz, seed), so the field is a pure function of world coordinates:
the same point returns the same value in every frame and on every run.
Interpolation uses the quintic fade for C2 continuity.
"""

from __future__ import annotations

import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_SHIFT30 = np.uint64(30)
_SHIFT27 = np.uint64(27)
_SHIFT31 = np.uint64(31)
_SHIFT11 = np.uint64(11)


def _splitmix64(x):
    x = (x + _GOLDEN).astype(np.uint64)
    x ^= x >> _SHIFT30
    x *= _M1
    x ^= x >> _SHIFT27
    x *= _M2
    x ^= x >> _SHIFT31
    return x


def hash01(ix, iz, seed=0):
    """Hash integer lattice coordinates to uniform values in [0, 1)."""
    ix = np.asarray(ix, dtype=np.int64).astype(np.uint64)
    iz = np.asarray(iz, dtype=np.int64).astype(np.uint64)
    h = _splitmix64(ix ^ _splitmix64(iz ^ _splitmix64(
        np.uint64(np.int64(seed)) * np.ones_like(ix))))
    return (h >> _SHIFT11).astype(np.float64) / float(1 << 53)


def fade(t):
    """Quintic fade 6t^5 - 15t^4 + 10t^3."""
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def value_noise(x, z, corner_fn):
    """Bilinear value noise; corner_fn(ix, iz) supplies lattice values."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    x0 = np.floor(x)
    z0 = np.floor(z)
    fx = fade(x - x0)
    fz = fade(z - z0)
    ix = x0.astype(np.int64)
    iz = z0.astype(np.int64)
    v00 = corner_fn(ix, iz)
    v10 = corner_fn(ix + 1, iz)
    v01 = corner_fn(ix, iz + 1)
    v11 = corner_fn(ix + 1, iz + 1)
    top = v00 + (v10 - v00) * fx
    bot = v01 + (v11 - v01) * fx
    return top + (bot - top) * fz


def fbm(x, z, octaves=3, seed=0, corner_fn=None):
    """Sum over o=1..O of 2^-o * Noise(2^o * [x, z]).

    Persistence 0.5 and lacunarity 2.0 are the amplitude and frequency
    ratios of that sum.  Custom corner_fn overrides the seeded hash
    (used by tests with hand-set lattice values).
    """
    if corner_fn is None:
        def corner_fn(ix, iz):
            return hash01(ix, iz, seed=seed)
    total = np.zeros(np.broadcast(np.asarray(x, dtype=np.float64),
                                  np.asarray(z, dtype=np.float64)).shape)
    for o in range(1, octaves + 1):
        freq = 2.0 ** o
        total = total + value_noise(np.asarray(x) * freq,
                                    np.asarray(z) * freq,
                                    corner_fn) / freq
    return total


def smoothstep(edge0, edge1, x):
    """Hermite smoothstep: 0 below edge0, 1 above edge1, 3t^2-2t^3 between."""
    t = np.clip((np.asarray(x, dtype=np.float64) - edge0) / (edge1 - edge0),
                0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)
