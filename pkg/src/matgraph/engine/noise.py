"""Tileable gradient noise keyed by a counter-based generator.

Every stochastic node derives a 128-bit key from (render seed, qualified node
name, node seed param). Lattice gradients are a counter-based hash of
(key, i, j), evaluated only at the lattice points a render touches; there is no
global RNG state, so results do not depend on evaluation order or threading.
"""
from __future__ import annotations

import hashlib
import math

import numpy as np

_SQRT2 = math.sqrt(2.0)


def node_key(render_seed: int, name: str, node_seed: int, octave: int = 0) -> int:
    msg = f"{render_seed}:{name}:{node_seed}:{octave}".encode()
    return int.from_bytes(hashlib.blake2b(msg, digest_size=16).digest(), "little")


_M64 = (1 << 64) - 1


def _mix(h):
    # splitmix64 finalizer on uint64 arrays (wrapping arithmetic)
    h = (h ^ (h >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    h = (h ^ (h >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return h ^ (h >> np.uint64(31))


def gradients(key: int, i, j):
    """Unit gradient vectors at integer lattice points (i, j)."""
    lo = np.uint64(key & _M64)
    hi = np.uint64((key >> 64) & _M64)
    h = _mix(i.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15) ^ lo)
    h = _mix(h ^ (j.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)) ^ hi)
    theta = (h >> np.uint64(11)).astype(np.float64) * (2.0 * math.pi / 2.0 ** 53)
    return np.cos(theta), np.sin(theta)


def _fade(t):
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def perlin(u, v, period: int, key: int):
    """Perlin noise in [0, 1] at normalized coords; period ``period`` cells per unit."""
    x = np.asarray(u, dtype=np.float64) * period
    y = np.asarray(v, dtype=np.float64) * period
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    i0 = x0.astype(np.int64) % period
    j0 = y0.astype(np.int64) % period
    i1 = (i0 + 1) % period
    j1 = (j0 + 1) % period

    def dot(i, j, dx, dy):
        gx, gy = gradients(key, i, j)
        return gx * dx + gy * dy

    n00 = dot(i0, j0, fx, fy)
    n10 = dot(i1, j0, fx - 1.0, fy)
    n01 = dot(i0, j1, fx, fy - 1.0)
    n11 = dot(i1, j1, fx - 1.0, fy - 1.0)
    sx = _fade(fx)
    sy = _fade(fy)
    nx0 = n00 + sx * (n10 - n00)
    nx1 = n01 + sx * (n11 - n01)
    n = nx0 + sy * (nx1 - nx0)
    # |n| <= sqrt(2)/2 for unit gradients
    return (n * _SQRT2 + 1.0) * 0.5


def fbm(u, v, period: int, octaves: int, persistence: float, keys):
    total = np.zeros(np.shape(u))
    amp = 1.0
    norm = 0.0
    for k in range(octaves):
        total += amp * (perlin(u, v, period * 2 ** k, keys[k]) - 0.5)
        norm += amp
        amp *= persistence
    if norm == 0.0:
        return total + 0.5
    return total / norm + 0.5
