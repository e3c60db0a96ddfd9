"""Pure-numpy reference implementations of the hot kernels.

Every function here has a numba twin in ``_kernels_numba`` with the same
signature. Results agree bit-for-bit for the integer kernels (Philox) and to
rounding for the floating point ones.
"""

import numpy as np

PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
PHILOX_M1 = np.uint64(0xCA5A826395121157)
PHILOX_W0 = np.uint64(0x9E3779B97F4A7C15)
PHILOX_W1 = np.uint64(0xBB67AE8584CAA73B)
PHILOX_ROUNDS = 10

_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 2.0**-53


def _mulhilo(a, b):
    lo = a * b
    a0, a1 = a & _MASK32, a >> _S32
    b0, b1 = b & _MASK32, b >> _S32
    p00, p01, p10, p11 = a0 * b0, a0 * b1, a1 * b0, a1 * b1
    mid = (p00 >> _S32) + (p01 & _MASK32) + (p10 & _MASK32)
    hi = p11 + (p01 >> _S32) + (p10 >> _S32) + (mid >> _S32)
    return hi, lo


def philox4x64(ctr, key):
    """Philox4x64-10 block function.

    Parameters
    ----------
    ctr : (n, 4) uint64 array
    key : (n, 2) uint64 array (or broadcastable)

    Returns
    -------
    (n, 4) uint64 array
    """
    ctr = np.asarray(ctr, dtype=np.uint64)
    key = np.asarray(key, dtype=np.uint64)
    c0, c1, c2, c3 = (ctr[..., j].copy() for j in range(4))
    k0 = np.broadcast_to(key[..., 0], c0.shape).copy()
    k1 = np.broadcast_to(key[..., 1], c0.shape).copy()
    with np.errstate(over="ignore"):
        for rnd in range(PHILOX_ROUNDS):
            if rnd > 0:
                k0 += PHILOX_W0
                k1 += PHILOX_W1
            hi0, lo0 = _mulhilo(PHILOX_M0, c0)
            hi1, lo1 = _mulhilo(PHILOX_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack([c0, c1, c2, c3], axis=-1)


def gaussian_block(seed, path_ids, step, stream, n_modes):
    """Standard normals of shape (len(path_ids), n_modes).

    Mode ``j`` of path ``p`` at ``step`` comes from Philox block
    ``counter=(j // 4, step, stream, 0)``, ``key=(seed, path_id)``; the four
    64-bit words are turned into two Box-Muller pairs.
    """
    path_ids = np.asarray(path_ids, dtype=np.uint64)
    n_paths = path_ids.shape[0]
    n_blocks = (n_modes + 3) // 4
    ctr = np.zeros((n_paths, n_blocks, 4), dtype=np.uint64)
    ctr[..., 0] = np.arange(n_blocks, dtype=np.uint64)[None, :]
    ctr[..., 1] = np.uint64(step)
    ctr[..., 2] = np.uint64(stream)
    key = np.empty((n_paths, n_blocks, 2), dtype=np.uint64)
    key[..., 0] = np.uint64(seed)
    key[..., 1] = path_ids[:, None]
    words = philox4x64(ctr, key)
    u = ((words >> _S11) + _ONE).astype(np.float64) * _INV_2_53
    rad1 = np.sqrt(-2.0 * np.log(u[..., 0]))
    rad2 = np.sqrt(-2.0 * np.log(u[..., 2]))
    z = np.empty((n_paths, n_blocks, 4))
    z[..., 0] = rad1 * np.cos(_TWO_PI * u[..., 1])
    z[..., 1] = rad1 * np.sin(_TWO_PI * u[..., 1])
    z[..., 2] = rad2 * np.cos(_TWO_PI * u[..., 3])
    z[..., 3] = rad2 * np.sin(_TWO_PI * u[..., 3])
    return z.reshape(n_paths, 4 * n_blocks)[:, :n_modes]


def power_law(grid, r, scale):
    """``scale * |g|**(r-1) * g`` elementwise."""
    if r == 1.0:
        return scale * grid
    if r == 2.0:
        return scale * np.abs(grid) * grid
    if r == 3.0:
        return scale * grid * grid * grid
    return scale * np.abs(grid) ** (r - 1.0) * grid


def tamed_update(state, drift, inv_lam, dt, taming, q, dw):
    """One tamed Euler-Maruyama update.

    ``state + drift*dt/(1 + dt*||drift||_H) + q*dw`` row by row; the taming
    denominator is dropped when ``taming`` is false. Also returns the per-row
    drift H-norm (non-finite rows signal overflow).
    """
    nb = np.sqrt(np.einsum("pi,i,pi->p", drift, inv_lam, drift))
    if taming:
        fac = dt / (1.0 + dt * nb)
    else:
        fac = np.full_like(nb, dt)
    return state + fac[:, None] * drift + q * dw, nb


def lp_power(grid, weights, p):
    """Quadrature of ``|g|**p`` for each row of ``grid``."""
    a = np.abs(grid)
    if p == 2.0:
        v = a * a
    elif p == 3.0:
        v = a * a * a
    else:
        v = a**p
    return v @ weights
