"""Nonlinearity, drift, noise coefficients and structural-condition checkers.

The equation is ``dX = {L Psi(t, X) + Phi(t, X)} dt + Q dW`` with, by
default, ``Psi(t, s) = kappa_t |s|^{r-1} s``, ``Phi(t, s) = c_t s`` and a
diagonal ``Q e_i = q_i e_i``.

Structural constants follow the monotonicity condition

    2<Psi(x) - Psi(y), y - x> - 2<Phi(x) - Phi(y), L^{-1}(x - y)>
        <= -delta^2 ||x - y||_{r+1}^{r+1} + gamma ||x - y||_H^2

and the intrinsic-norm condition

    ||x||_{r+1}^{r+1} >= xi^2 ||x||_Q^{2+theta} ||x||_H^{r-1-theta}.

For the power law the sharp pointwise constant is ``2^{1-r}`` (see
:func:`power_law_delta`); the factor 2 on the left-hand side gives
``delta^2 = 2^{2-r} kappa`` and ``gamma = 2 c``.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import kernels
from .coefficients import PiecewiseConstant, as_piecewise, combine
from .spectral import analyze, h_norm_sq, lp_norm_power, q_norm, synthesize


class ModelError(ValueError):
    """Model parameters violating a structural requirement."""


@dataclass(frozen=True)
class StructuralConstants:
    """Resolved constants entering the coupling and Harnack formulas."""

    r: float
    theta: float
    eps: float
    delta_sq: PiecewiseConstant
    xi_sq: PiecewiseConstant
    gamma: PiecewiseConstant
    eta: PiecewiseConstant
    sigma: PiecewiseConstant
    lambda_1: float
    hs_norm_sq: float

    @property
    def delta(self):
        return self.delta_sq.map(np.sqrt)

    @property
    def xi(self):
        return self.xi_sq.map(np.sqrt)

    @property
    def delta_xi(self):
        return combine(lambda d, x: np.sqrt(d * x), self.delta_sq, self.xi_sq)

    @property
    def stationary(self):
        return self.delta_sq.is_constant and self.xi_sq.is_constant and self.gamma.is_constant


@dataclass(frozen=True)
class ModelSpec:
    """Model parameters.

    ``q`` is a scalar (all modes equal), a per-mode sequence, or a callable
    ``i -> q_i`` (1-based). ``psi``/``phi`` replace the default power law and
    linear drift by arbitrary vectorized pointwise maps ``f(t, s)``; then
    ``delta_sq`` and ``gamma`` must be supplied since they cannot be derived.
    """

    r: float = 2.0
    theta: float = 1.0
    psi_scale: object = 1.0
    phi_coef: object = 0.0
    q: object = 1.0
    psi: Optional[Callable] = None
    phi: Optional[Callable] = None
    delta_sq: object = None
    gamma: object = None

    def __post_init__(self):
        r, th = float(self.r), float(self.theta)
        if r < 1:
            raise ModelError("r must be >= 1")
        if th < 0 or th <= r - 3:
            raise ModelError(f"theta={th} must satisfy theta >= 0 and theta > r - 3")
        if th > r - 1 + 1e-12:
            raise ModelError(f"theta={th} must satisfy theta <= r - 1")
        if (3 - r + th) / (4 + th) > 0.5 + 1e-12:
            raise ModelError("coupling exponent eps must be <= 1/2")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "psi_scale", as_piecewise(self.psi_scale))
        object.__setattr__(self, "phi_coef", as_piecewise(self.phi_coef))
        if min(self.psi_scale.values) < 0:
            raise ModelError("psi_scale must be nonnegative")
        if (self.psi is not None or self.phi is not None) and (
            self.delta_sq is None or self.gamma is None
        ):
            raise ModelError("custom psi/phi require explicit delta_sq and gamma")
        if self.delta_sq is not None:
            object.__setattr__(self, "delta_sq", as_piecewise(self.delta_sq))
        if self.gamma is not None:
            object.__setattr__(self, "gamma", as_piecewise(self.gamma))

    @property
    def eps(self):
        return (3.0 - self.r + self.theta) / (4.0 + self.theta)

    @property
    def linear_psi(self):
        return self.psi is None and self.r == 1.0

    def q_values(self, n_modes):
        if callable(self.q):
            q = np.array([float(self.q(i)) for i in range(1, n_modes + 1)])
        else:
            q = np.asarray(self.q, dtype=float)
            if q.ndim == 0:
                q = np.full(n_modes, float(q))
            elif q.shape[0] < n_modes:
                raise ModelError(f"q has {q.shape[0]} entries, need {n_modes}")
            else:
                q = q[:n_modes].copy()
        return q

    def constants(self, basis):
        """Resolve delta, xi, gamma, eta, sigma for a given basis."""
        q = self.q_values(basis.n_modes)
        q_min_sq = float(np.min(q * q))
        if q_min_sq <= 0:
            raise ModelError("intrinsic-norm condition needs inf q_i^2 > 0")
        lam1 = float(basis.eigenvalues[0])
        xi_sq = q_min_sq ** ((2 + self.theta) / 2) * lam1 ** ((self.r - 1 - self.theta) / 2)
        if self.delta_sq is not None:
            delta_sq = self.delta_sq
        else:
            delta_sq = self.psi_scale.map(lambda k: 2.0 * power_law_delta(self.r) * k)
        if min(delta_sq.values) <= 0:
            raise ModelError("delta must be strictly positive")
        gamma = self.gamma if self.gamma is not None else self.phi_coef.map(lambda c: 2.0 * c)
        return StructuralConstants(
            r=self.r,
            theta=self.theta,
            eps=self.eps,
            delta_sq=delta_sq,
            xi_sq=PiecewiseConstant.constant(xi_sq),
            gamma=gamma,
            eta=self.psi_scale,
            sigma=self.phi_coef,
            lambda_1=lam1,
            hs_norm_sq=float(np.sum(q * q / basis.eigenvalues)),
        )


def psi_pointwise(spec, s, t=0.0):
    """``Psi(t, s)``; the default is ``kappa_t |s|^{r-1} s``."""
    s = np.asarray(s, dtype=float)
    if spec.psi is not None:
        return spec.psi(t, s)
    scale = spec.psi_scale(t)
    g = np.atleast_2d(s)
    out = kernels.power_law(g, spec.r, scale)
    return out.reshape(s.shape) if s.ndim < 2 else out


def phi_pointwise(spec, s, t=0.0):
    s = np.asarray(s, dtype=float)
    if spec.phi is not None:
        return spec.phi(t, s)
    return spec.phi_coef(t) * s


def power_law_delta(r):
    """Largest ``d`` with ``(|a|^{r-1}a - |b|^{r-1}b)(a - b) >= d |a - b|^{r+1}``.

    The ratio is homogeneous of degree zero and minimized at ``a = -b``,
    which gives ``2^{1-r}``.
    """
    if r < 1:
        raise ModelError("r must be >= 1")
    return 2.0 ** (1.0 - r)


def _psi_coeffs(basis, spec, t, a):
    """Coefficients of Psi(X) together with the grid values of X (or None)."""
    if spec.linear_psi:
        return spec.psi_scale(t) * a, None
    grid = synthesize(basis, a)
    if spec.psi is not None:
        pg = spec.psi(t, grid)
    else:
        pg = kernels.power_law(np.atleast_2d(grid), spec.r, spec.psi_scale(t))
        if grid.ndim == 1:
            pg = pg[0]
    return analyze(basis, pg), grid


def _phi_coeffs(basis, spec, t, a, grid):
    if spec.phi is None:
        return spec.phi_coef(t) * a
    if grid is None:
        grid = synthesize(basis, a)
    return analyze(basis, spec.phi(t, grid))


def drift_and_grid(basis, spec, t, a):
    psi_c, grid = _psi_coeffs(basis, spec, t, a)
    return -basis.eigenvalues * psi_c + _phi_coeffs(basis, spec, t, a, grid), grid


def drift_galerkin(basis, spec, t, X):
    """Galerkin drift ``-lambda_i <Psi(X), e_i> + <Phi(X), e_i>``.

    Inner products are quadratures on the basis grid, except for the linear
    cases (r = 1 power law, linear Phi) which are applied exactly.
    """
    a = np.asarray(X, dtype=float)
    if a.shape[-1] != basis.n_modes:
        raise ValueError(f"field has {a.shape[-1]} modes, basis has {basis.n_modes}")
    return drift_and_grid(basis, spec, t, a)[0]


def pairing(basis, spec, t, v, w):
    """Duality pairing ``<A(v), w> = -<Psi(v), w> - <Phi(v), L^{-1} w>``."""
    psi_c, grid = _psi_coeffs(basis, spec, t, v)
    phi_c = _phi_coeffs(basis, spec, t, v, grid)
    return -np.sum(psi_c * w, axis=-1) + np.sum(phi_c * w * basis.inv_eigenvalues, axis=-1)


# --- structural checks -------------------------------------------------------


def random_fields(basis, n, rng):
    """Independent per-mode Gaussians with standard deviation ``1/i``."""
    return rng.standard_normal((n, basis.n_modes)) / np.arange(1, basis.n_modes + 1)


def check_condition_1_3(basis, spec, n_samples=10_000, seed=0, t=0.0, tol=1e-8, pairs=None):
    """Monotonicity condition on random pairs.

    Returns the minimum of ``RHS - LHS`` (slack) over the pairs, the pair
    attaining it and the number of pairs with slack below ``-tol``.
    """
    const = spec.constants(basis)
    if pairs is None:
        rng = np.random.default_rng(seed)
        x = random_fields(basis, n_samples, rng)
        y = random_fields(basis, n_samples, rng)
    else:
        x, y = (np.atleast_2d(np.asarray(p, dtype=float)) for p in pairs)
    d = x - y
    gx, gy = synthesize(basis, x), synthesize(basis, y)
    px, py = psi_pointwise(spec, gx, t), psi_pointwise(spec, gy, t)
    lhs = 2.0 * ((px - py) * (gy - gx)) @ basis.weights
    if spec.phi is None:
        lhs = lhs + 2.0 * spec.phi_coef(t) * h_norm_sq(basis, d)
    else:
        fx, fy = analyze(basis, spec.phi(t, gx)), analyze(basis, spec.phi(t, gy))
        lhs = lhs + 2.0 * np.sum((fx - fy) * d * basis.inv_eigenvalues, axis=-1)
    dr = lp_norm_power(basis, d, spec.r + 1.0, grid=gx - gy)
    rhs = -const.delta_sq(t) * dr + const.gamma(t) * h_norm_sq(basis, d)
    slack = rhs - lhs
    k = int(np.argmin(slack))
    return {
        "min_slack": float(slack[k]),
        "worst_pair": (x[k], y[k]),
        "n_violations": int(np.sum(slack < -tol)),
        "delta_sq": const.delta_sq(t),
        "gamma": const.gamma(t),
    }


def check_condition_1_4(basis, spec, n_samples=10_000, seed=0, fields=None):
    """Intrinsic-norm condition with ``xi^2`` from the norm chain.

    Zero fields are skipped (ratio treated as +inf).
    """
    const = spec.constants(basis)
    xi_sq = const.xi_sq(0.0)
    if fields is None:
        x = random_fields(basis, n_samples, np.random.default_rng(seed))
    else:
        x = np.atleast_2d(np.asarray(fields, dtype=float))
    q = spec.q_values(basis.n_modes)
    lhs = lp_norm_power(basis, x, spec.r + 1.0)
    qn = q_norm(x, q)
    hn = np.sqrt(h_norm_sq(basis, x))
    nonzero = hn > 0
    rhs = np.zeros_like(lhs)
    rhs[nonzero] = (
        xi_sq * qn[nonzero] ** (2 + spec.theta) * hn[nonzero] ** (spec.r - 1 - spec.theta)
    )
    ratio = np.full_like(lhs, np.inf)
    ratio[nonzero] = lhs[nonzero] / rhs[nonzero]
    k = int(np.argmin(ratio))
    return {
        "xi_squared_used": xi_sq,
        "min_ratio": float(ratio[k]),
        "worst_field": x[k],
        "ratios": ratio,
    }


def _dual_norm(basis, spec, t, v):
    # Galerkin representative g with <A(v), w> = <g, w>_{L^2}; its
    # L^{(r+1)/r} norm bounds the V* norm by Hoelder.
    psi_c, grid = _psi_coeffs(basis, spec, t, v)
    phi_c = _phi_coeffs(basis, spec, t, v, grid)
    g = -psi_c + phi_c * basis.inv_eigenvalues
    p_dual = (spec.r + 1.0) / spec.r
    return lp_norm_power(basis, g, p_dual) ** (1.0 / p_dual)


def check_variational_conditions(basis, spec, n_samples=1_000, seed=0, t=0.0, tol=1e-8):
    """Galerkin-level spot checks of semicontinuity, monotonicity, coercivity
    and boundedness of ``A = L Psi + Phi`` (constant diagonal Q).

    Each entry of the returned dict carries ``ok`` and a worst-case witness.
    """
    const = spec.constants(basis)
    rng = np.random.default_rng(seed)
    gamma_plus = max(const.gamma(t), 0.0)
    hs = const.hs_norm_sq
    r = spec.r
    report = {}

    # growth bound |Psi(s)| + |Phi(s) - sigma s| <= eta (1 + |s|^r)
    s = np.linspace(-50.0, 50.0, 2001)
    growth = const.eta(t) * (1 + np.abs(s) ** r) - (
        np.abs(psi_pointwise(spec, s, t)) + np.abs(phi_pointwise(spec, s, t) - const.sigma(t) * s)
    )
    report["growth"] = {"min_slack": float(growth.min()), "ok": bool(growth.min() >= -tol)}

    # (A1) modulus of continuity of lam -> <A(v1 + lam v2), v> shrinks on refinement
    v1, v2, v = (random_fields(basis, 1, rng)[0] for _ in range(3))
    moduli = []
    for k in (6, 7, 8):
        lam = np.linspace(-1.0, 1.0, 2**k + 1)
        h = pairing(basis, spec, t, v1 + lam[:, None] * v2, v)
        moduli.append(float(np.max(np.abs(np.diff(h)))))
    report["A1"] = {
        "moduli": moduli,
        "ok": bool(moduli[2] <= 0.6 * moduli[1] + 1e-14 and moduli[1] <= 0.6 * moduli[0] + 1e-14),
    }

    # (A2) 2<A(v1) - A(v2), v1 - v2> <= K ||v1 - v2||_H^2 with K = gamma^+
    x = random_fields(basis, n_samples, rng)
    y = random_fields(basis, n_samples, rng)
    d = x - y
    lhs2 = 2.0 * (pairing(basis, spec, t, x, d) - pairing(basis, spec, t, y, d))
    slack2 = gamma_plus * h_norm_sq(basis, d) - lhs2
    k2 = int(np.argmin(slack2))
    report["A2"] = {
        "K": gamma_plus,
        "min_slack": float(slack2[k2]),
        "witness": (x[k2], y[k2]),
        "ok": bool(slack2[k2] >= -tol),
    }

    # (A3) 2<A(v), v> + ||Q||_HS^2 + alpha ||v||^{r+1} <= f + K ||v||_H^2
    vs = np.vstack([np.zeros(basis.n_modes), x])
    alpha = const.delta_sq(t)
    lhs3 = 2.0 * pairing(basis, spec, t, vs, vs) + hs + alpha * lp_norm_power(basis, vs, r + 1.0)
    slack3 = hs + gamma_plus * h_norm_sq(basis, vs) - lhs3
    k3 = int(np.argmin(slack3))
    report["A3"] = {
        "alpha": alpha,
        "K": gamma_plus,
        "f_floor": hs,
        "min_slack": float(slack3[k3]),
        "zero_field_slack": float(slack3[0]),
        "ok": bool(slack3[k3] >= -tol),
    }

    # (A4) ||A(v)||_* <= C (1 + ||v||_{r+1}^r), C stable under v -> s v
    ratios = _dual_norm(basis, spec, t, x) / (1.0 + lp_norm_power(basis, x, r + 1.0) ** (r / (r + 1.0)))
    scales = np.array([1.0, 10.0, 100.0, 1000.0])
    v0 = x[int(np.argmax(ratios))]
    sv = scales[:, None] * v0
    scaled = _dual_norm(basis, spec, t, sv) / (1.0 + lp_norm_power(basis, sv, r + 1.0) ** (r / (r + 1.0)))
    report["A4"] = {
        "C_hat": float(max(ratios.max(), scaled.max())),
        "scaled_ratios": scaled.tolist(),
        "ok": bool(np.all(np.isfinite(scaled)) and abs(scaled[-1] / scaled[-2] - 1.0) < 0.01),
    }
    report["ok"] = all(entry["ok"] for entry in report.values() if isinstance(entry, dict))
    return report
