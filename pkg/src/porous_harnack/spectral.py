"""Eigenbases, spectral maps, grid transforms and norms.

States are stored as coefficient vectors ``a_i = <x, e_i>`` in L^2(m)
coordinates, shape ``(N,)`` for one field or ``(P, N)`` for a batch. With
that convention

    ||x||_H^2 = sum a_i^2 / lambda_i,   ||x||_2^2 = sum a_i^2,
    ||x||_Q^2 = sum a_i^2 / q_i^2,

and ``||x||_{r+1}`` is the quadrature of ``|x(u)|^{r+1}`` on the basis grid.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import special

from . import kernels

KINDS = ("dirichlet_sine", "hermite_ou")
ORTHONORMALITY_TOL = 1e-10
# quadrature nodes per mode, per basis kind
OVERSAMPLING = {"dirichlet_sine": 8, "hermite_ou": 4}


class BasisError(ValueError):
    """Invalid basis parameters or failed quadrature validation."""


@dataclass(frozen=True)
class SpectralMap:
    """Increasing map ``phi`` applied to the base eigenvalues.

    ``form`` is one of ``identity``, ``power`` (``s**q``) or ``shifted_power``
    (``(eps + s)**q``).
    """

    form: str = "identity"
    q: float = 1.0
    eps: float = 0.0

    def __post_init__(self):
        if self.form not in ("identity", "power", "shifted_power"):
            raise BasisError(f"unknown spectral map form {self.form!r}")
        if self.form != "identity" and self.q <= 0:
            raise BasisError("spectral map exponent q must be positive")
        if self.form == "shifted_power" and self.eps <= 0:
            raise BasisError("shifted_power needs eps > 0")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.form == "identity":
            return s.copy()
        if self.form == "power":
            return s**self.q
        return (self.eps + s) ** self.q


@dataclass(frozen=True, eq=False)
class EigenBasis:
    kind: str
    n_modes: int
    spectral_map: SpectralMap
    base_eigenvalues: np.ndarray
    eigenvalues: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    # table[i, k] = e_{i+1}(u_k)
    table: np.ndarray
    analysis_matrix: np.ndarray = field(repr=False)
    inv_eigenvalues: np.ndarray = field(repr=False)

    @property
    def n_quad(self):
        return self.nodes.shape[0]

    def unit_h_field(self, mode=1):
        """Field along ``e_mode`` with unit H-norm."""
        a = np.zeros(self.n_modes)
        a[mode - 1] = np.sqrt(self.eigenvalues[mode - 1])
        return a


def _readonly(*arrays):
    for a in arrays:
        a.setflags(write=False)


def _hermite_table(n_modes, nodes):
    # normalized probabilists' Hermite polynomials He_n / sqrt(n!)
    table = np.empty((n_modes, nodes.shape[0]))
    table[0] = 1.0
    if n_modes > 1:
        table[1] = nodes
    for n in range(1, n_modes - 1):
        table[n + 1] = (nodes * table[n] - np.sqrt(n) * table[n - 1]) / np.sqrt(n + 1)
    return table


def build_basis(kind, n_modes, n_quad=None, spectral_map=None, check=True):
    """Construct an eigenbasis with its quadrature grid.

    Parameters
    ----------
    kind : {'dirichlet_sine', 'hermite_ou'}
        ``dirichlet_sine``: ``e_i = sqrt(2) sin(i pi u)`` on (0, 1) with
        Lebesgue measure, base eigenvalues ``(i pi)^2``; uniform grid
        ``u_k = k/M`` with weights ``1/M`` (trapezoid rule, both endpoint
        values vanish). ``hermite_ou``: normalized Hermite polynomials on R
        with the standard Gaussian, base eigenvalues ``i - 1``; Gauss-Hermite
        grid.
    n_modes : int
        Truncation level N.
    n_quad : int, optional
        Number of quadrature nodes M; defaults to the oversampling floor
        (8N for sine, 4N for Hermite) and may not go below it.
    spectral_map : SpectralMap, optional
        Defaults to the identity.
    check : bool
        Verify discrete orthonormality to ``ORTHONORMALITY_TOL``.
    """
    if kind not in KINDS:
        raise BasisError(f"unknown basis kind {kind!r}; expected one of {KINDS}")
    n_modes = int(n_modes)
    if n_modes < 1:
        raise BasisError("n_modes must be >= 1")
    floor = OVERSAMPLING[kind] * n_modes
    n_quad = floor if n_quad is None else int(n_quad)
    if n_quad < floor:
        raise BasisError(f"n_quad={n_quad} below the oversampling floor {floor} for {kind}")
    spectral_map = spectral_map or SpectralMap()

    idx = np.arange(1, n_modes + 1)
    if kind == "dirichlet_sine":
        base = (idx * np.pi) ** 2
        nodes = np.arange(n_quad) / n_quad
        weights = np.full(n_quad, 1.0 / n_quad)
        table = np.sqrt(2.0) * np.sin(np.pi * np.outer(idx, nodes))
    else:
        base = (idx - 1).astype(float)
        nodes, weights = special.roots_hermitenorm(n_quad)
        weights = weights / np.sqrt(2.0 * np.pi)
        table = _hermite_table(n_modes, nodes)

    lam = spectral_map(base)
    if not np.all(lam > 0):
        raise BasisError(
            "mapped eigenvalues must be strictly positive; "
            "hermite_ou needs a shifted_power map with eps > 0"
        )
    if np.any(np.diff(lam) < 0):
        raise BasisError("spectral map must be increasing")

    if check:
        gram = (table * weights) @ table.T
        err = np.max(np.abs(gram - np.eye(n_modes)))
        if err > ORTHONORMALITY_TOL:
            raise BasisError(f"quadrature orthonormality error {err:.3e} exceeds tolerance")

    analysis = np.ascontiguousarray((table * weights).T)
    table = np.ascontiguousarray(table)
    inv_lam = 1.0 / lam
    _readonly(base, lam, nodes, weights, table, analysis, inv_lam)
    return EigenBasis(
        kind=kind,
        n_modes=n_modes,
        spectral_map=spectral_map,
        base_eigenvalues=base,
        eigenvalues=lam,
        nodes=nodes,
        weights=weights,
        table=table,
        analysis_matrix=analysis,
        inv_eigenvalues=inv_lam,
    )


def _check_len(basis, arr, axis_len, what):
    if arr.shape[-1] != axis_len:
        raise ValueError(f"{what} has trailing dimension {arr.shape[-1]}, expected {axis_len}")


def synthesize(basis, coeffs):
    """Grid values ``x(u_k) = sum_i a_i e_i(u_k)``; batches along leading axes."""
    a = np.asarray(coeffs, dtype=float)
    _check_len(basis, a, basis.n_modes, "field")
    return a @ basis.table


def analyze(basis, grid_values):
    """Coefficients ``a_i = sum_k w_k f(u_k) e_i(u_k)``."""
    f = np.asarray(grid_values, dtype=float)
    _check_len(basis, f, basis.n_quad, "grid")
    return f @ basis.analysis_matrix


def h_norm_sq(basis, coeffs):
    a = np.asarray(coeffs, dtype=float)
    return (a * a) @ basis.inv_eigenvalues


def h_norm(basis, coeffs):
    return np.sqrt(h_norm_sq(basis, coeffs))


def h_inner(basis, a, b):
    return (np.asarray(a) * np.asarray(b)) @ basis.inv_eigenvalues


def q_norm(coeffs, q_values):
    a = np.asarray(coeffs, dtype=float)
    return np.sqrt(np.sum((a / q_values) ** 2, axis=-1))


def lp_norm_power(basis, coeffs, p, grid=None):
    """``||x||_p^p`` by quadrature; pass ``grid`` to reuse synthesized values."""
    if grid is None:
        grid = synthesize(basis, coeffs)
    g2 = np.atleast_2d(grid)
    out = kernels.lp_power(g2, basis.weights, float(p))
    return out if np.ndim(grid) > 1 else out[0]


class NormReport(NamedTuple):
    H: np.ndarray
    L2: np.ndarray
    Lr1: np.ndarray
    Q: np.ndarray


def norms(basis, coeffs, r, q_values=None):
    """H, L^2, L^{r+1} and intrinsic Q norms of a field (or batch).

    ``q_values`` defaults to all ones; zeros are rejected.
    """
    a = np.asarray(coeffs, dtype=float)
    _check_len(basis, a, basis.n_modes, "field")
    q = np.ones(basis.n_modes) if q_values is None else np.asarray(q_values, dtype=float)
    if np.any(q == 0):
        raise ValueError("q_values must be nonzero")
    if r < 1:
        raise ValueError("r must be >= 1")
    p = r + 1.0
    return NormReport(
        H=h_norm(basis, a),
        L2=np.sqrt(np.sum(a * a, axis=-1)),
        Lr1=lp_norm_power(basis, a, p) ** (1.0 / p),
        Q=q_norm(a, q),
    )


def hs_summability_report(basis, q_values):
    """Truncated Hilbert-Schmidt sum ``sum_{i<=N} q_i^2/lambda_i``.

    ``tail_ratio`` is the ratio of the last two complete dyadic block sums
    (blocks ``[2^k, 2^{k+1})``); values well below one indicate a summable
    tail. It is NaN when fewer than two nonzero blocks are available.
    """
    q = np.broadcast_to(np.asarray(q_values, dtype=float), (basis.n_modes,))
    terms = q * q / basis.eigenvalues
    partial = float(terms.sum())
    blocks = []
    k = 0
    while 2 ** (k + 1) - 1 <= basis.n_modes:
        blocks.append(terms[2**k - 1 : 2 ** (k + 1) - 1].sum())
        k += 1
    if len(blocks) >= 2 and blocks[-2] > 0:
        ratio = float(blocks[-1] / blocks[-2])
    else:
        ratio = float("nan")
    return {"partial_sum": partial, "tail_ratio": ratio, "n_modes": basis.n_modes}
