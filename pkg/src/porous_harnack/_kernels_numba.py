"""Numba-compiled twins of ``_kernels_numpy``.

Compiled lazily on first call and cached on disk (``cache=True``).
"""

import math

import numba
import numpy as np

PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
PHILOX_M1 = np.uint64(0xCA5A826395121157)
PHILOX_W0 = np.uint64(0x9E3779B97F4A7C15)
PHILOX_W1 = np.uint64(0xBB67AE8584CAA73B)

_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 2.0**-53


@numba.njit(inline="always")
def _mulhilo(a, b):
    lo = a * b
    a0 = a & _MASK32
    a1 = a >> _S32
    b0 = b & _MASK32
    b1 = b >> _S32
    p00 = a0 * b0
    p01 = a0 * b1
    p10 = a1 * b0
    p11 = a1 * b1
    mid = (p00 >> _S32) + (p01 & _MASK32) + (p10 & _MASK32)
    hi = p11 + (p01 >> _S32) + (p10 >> _S32) + (mid >> _S32)
    return hi, lo


@numba.njit(inline="always")
def _philox(c0, c1, c2, c3, k0, k1):
    for rnd in range(10):
        if rnd > 0:
            k0 += PHILOX_W0
            k1 += PHILOX_W1
        hi0, lo0 = _mulhilo(PHILOX_M0, c0)
        hi1, lo1 = _mulhilo(PHILOX_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@numba.njit(cache=True, nogil=True)
def _philox4x64(ctr, key):
    n = ctr.shape[0]
    out = np.empty((n, 4), dtype=np.uint64)
    for i in range(n):
        c0, c1, c2, c3 = _philox(
            ctr[i, 0], ctr[i, 1], ctr[i, 2], ctr[i, 3], key[i, 0], key[i, 1]
        )
        out[i, 0] = c0
        out[i, 1] = c1
        out[i, 2] = c2
        out[i, 3] = c3
    return out


def philox4x64(ctr, key):
    ctr = np.ascontiguousarray(np.atleast_2d(ctr), dtype=np.uint64)
    key = np.ascontiguousarray(np.broadcast_to(np.atleast_2d(np.asarray(key, dtype=np.uint64)), (ctr.shape[0], 2)))
    return _philox4x64(ctr, key)


@numba.njit(inline="always")
def _unit(w):
    return float((w >> _S11) + _ONE) * _INV_2_53


@numba.njit(cache=True, nogil=True)
def _gaussian_block(seed, path_ids, step, stream, n_modes):
    n_paths = path_ids.shape[0]
    n_blocks = (n_modes + 3) // 4
    out = np.empty((n_paths, 4 * n_blocks))
    for p in range(n_paths):
        k1 = path_ids[p]
        for blk in range(n_blocks):
            w0, w1, w2, w3 = _philox(np.uint64(blk), step, stream, _ZERO, seed, k1)
            u0 = _unit(w0)
            u1 = _unit(w1)
            u2 = _unit(w2)
            u3 = _unit(w3)
            rad1 = math.sqrt(-2.0 * math.log(u0))
            rad2 = math.sqrt(-2.0 * math.log(u2))
            j = 4 * blk
            out[p, j] = rad1 * math.cos(_TWO_PI * u1)
            out[p, j + 1] = rad1 * math.sin(_TWO_PI * u1)
            out[p, j + 2] = rad2 * math.cos(_TWO_PI * u3)
            out[p, j + 3] = rad2 * math.sin(_TWO_PI * u3)
    return out


def gaussian_block(seed, path_ids, step, stream, n_modes):
    path_ids = np.ascontiguousarray(path_ids, dtype=np.uint64)
    out = _gaussian_block(
        np.uint64(seed), path_ids, np.uint64(step), np.uint64(stream), n_modes
    )
    return out[:, :n_modes]


@numba.njit(cache=True, nogil=True)
def _power_law(grid, r, scale):
    out = np.empty_like(grid)
    n, m = grid.shape
    for i in range(n):
        for k in range(m):
            g = grid[i, k]
            if r == 1.0:
                v = g
            elif r == 2.0:
                v = abs(g) * g
            elif r == 3.0:
                v = g * g * g
            elif r == 1.5:
                # numpy lowers **0.5 to sqrt too; pow is several times slower
                v = math.sqrt(abs(g)) * g
            else:
                v = abs(g) ** (r - 1.0) * g
            out[i, k] = scale * v
    return out


def power_law(grid, r, scale):
    return _power_law(np.ascontiguousarray(grid, dtype=np.float64), float(r), float(scale))


@numba.njit(cache=True, nogil=True)
def _tamed_update(state, drift, inv_lam, dt, taming, q, dw):
    n, m = state.shape
    out = np.empty_like(state)
    norms = np.empty(n)
    for p in range(n):
        s = 0.0
        for i in range(m):
            s += drift[p, i] * drift[p, i] * inv_lam[i]
        nb = math.sqrt(s)
        norms[p] = nb
        fac = dt / (1.0 + dt * nb) if taming else dt
        for i in range(m):
            out[p, i] = state[p, i] + fac * drift[p, i] + q[i] * dw[p, i]
    return out, norms


def tamed_update(state, drift, inv_lam, dt, taming, q, dw):
    return _tamed_update(
        np.ascontiguousarray(state),
        np.ascontiguousarray(drift),
        inv_lam,
        float(dt),
        bool(taming),
        q,
        np.ascontiguousarray(dw),
    )


@numba.njit(cache=True, nogil=True)
def _lp_power(grid, weights, p):
    n, m = grid.shape
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        for k in range(m):
            a = abs(grid[i, k])
            if p == 2.0:
                v = a * a
            elif p == 3.0:
                v = a * a * a
            else:
                v = a**p
            s += weights[k] * v
        out[i] = s
    return out


def lp_power(grid, weights, p):
    return _lp_power(np.ascontiguousarray(grid, dtype=np.float64), weights, float(p))
