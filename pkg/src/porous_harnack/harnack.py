"""Harnack constants and Monte Carlo checks of the Harnack inequality,
the Girsanov identity and the strong Feller estimate.

The inequality checked is

    (P_t F(y))^alpha <= P_t F^alpha(x) exp[alpha c(theta, t) ||x - y||_H^k / (alpha - 1)]

with ``k = 2(3 - r + theta)/(2 + theta)``. All Monte Carlo comparisons are
one-sided with a 3 standard-error margin.
"""

import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .coefficients import exp_weighted_integral
from .integrator import coupled_simulate, coupling_beta_schedule, simulate_paths
from .spectral import h_norm, h_norm_sq

MIN_ESS = 100
Z_MAX = 3.0


def distance_exponent(r, theta):
    """``2(3 - r + theta)/(2 + theta)``."""
    return 2.0 * (3.0 - r + theta) / (2.0 + theta)


def _check_theta(r, theta):
    if theta <= r - 3 or theta < 0:
        raise ValueError(f"theta={theta} must satisfy theta >= 0 and theta > r - 3")


def harnack_constant(const, t):
    """``c(theta, t)`` from the structural constants.

    Both time integrals ``int_0^t (delta xi)^j exp(-eps int_0^s gamma) ds``,
    ``j = 1, 2``, are evaluated exactly on each constant piece.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    r, th = const.r, const.theta
    _check_theta(r, th)
    eps = (3.0 - r + th) / (4.0 + th)
    i2 = exp_weighted_integral(const.delta_sq * const.xi_sq, const.gamma, eps, t)
    i1 = exp_weighted_integral(const.delta_xi, const.gamma, eps, t)
    pw = (6.0 + 2.0 * th) / (2.0 + th)
    return 2.0 * (4.0 + th) ** pw * i2 ** (th / (2.0 + th)) / ((3.0 - r + th) ** pw * i1**2)


def stationary_bracket(const, t):
    """``(1 - exp(-eps gamma t))/gamma``, equal to ``eps t`` at ``gamma = 0``."""
    eps = const.eps
    g = const.gamma(0.0)
    if abs(eps * g * t) < 1e-12:
        return eps * t * (1.0 - 0.5 * eps * g * t)
    return -np.expm1(-eps * g * t) / g


def harnack_constant_stationary(const, t, alpha=None):
    """Stationary form ``c(theta, t) = c(theta) / bracket^{(4+theta)/(2+theta)}``.

    ``c(theta) = 2 (4 + theta)/(3 - r + theta) (delta xi)^{-4/(2+theta)}``.
    Returns a dict with ``c_theta``, ``bracket``, ``bracket_power`` and
    ``c_t``; when ``alpha`` is given, ``exponent_coef = alpha c_t`` is the
    factor multiplying ``-||x - y||_H^k`` in the density bound.
    """
    if not const.stationary:
        raise ValueError("stationary form needs constant delta, xi and gamma")
    r, th = const.r, const.theta
    _check_theta(r, th)
    dxi = float(const.delta_xi(0.0))
    c_theta = 2.0 * (4.0 + th) / (3.0 - r + th) * dxi ** (-4.0 / (2.0 + th))
    br = stationary_bracket(const, t)
    bp = br ** ((4.0 + th) / (2.0 + th))
    out = {"c_theta": c_theta, "bracket": br, "bracket_power": bp, "c_t": c_theta / bp}
    if alpha is not None:
        out["exponent_coef"] = (np.inf if np.isinf(alpha) else alpha) * out["c_t"]
        out["saturated"] = bool(np.isinf(alpha))
    return out


def harnack_factor(const, alpha, dist, t):
    """``exp[alpha c(theta, t) dist^k / (alpha - 1)]`` (may overflow to inf)."""
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    k = distance_exponent(const.r, const.theta)
    with np.errstate(over="ignore"):
        return float(np.exp(alpha * harnack_constant(const, t) * dist**k / (alpha - 1.0)))


def holder_budget(sched, kappa=1.0):
    """Upper bound ``kappa^2 c^2 ||x - y||_H^{2 eps} / eps`` for the
    accumulated sum ``sum (kappa beta)^2 ||D||_Q^{2+theta}/||D||_H^{(2+theta) eps} dt``."""
    return kappa**2 * sched.c**2 * sched.dist ** (2 * sched.eps) / sched.eps


def moment_bound(sched, theta, alpha_prime, kappa=1.0):
    """Closed-form bound on ``E R^{alpha'}`` for the coupling of strength
    ``kappa beta``: ``exp[alpha'(alpha'-1)/2 * B]`` with
    ``B = kappa^2 (c^2 ||x-y||^{2eps}/eps)^{2/(2+theta)} (int beta^2)^{theta/(2+theta)}``.
    """
    b = (sched.c**2 * sched.dist ** (2 * sched.eps) / sched.eps) ** (2.0 / (2.0 + theta))
    b *= sched.beta_sq_integral() ** (theta / (2.0 + theta))
    b *= kappa**2
    with np.errstate(over="ignore"):
        return float(np.exp(0.5 * alpha_prime * (alpha_prime - 1.0) * b))


# --- test functionals -------------------------------------------------------


def default_functionals(basis):
    """Positive bounded functionals of the H-norm, vectorized over batches."""
    return {
        "inv_quad": lambda z: 1.0 / (1.0 + h_norm_sq(basis, z)),
        "exp_h": lambda z: np.exp(-h_norm(basis, z)),
    }


def _mean_se(v):
    v = np.asarray(v, dtype=float)
    n = v.shape[0]
    if n < 2:
        return float(v.mean()), float("nan")
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(n))


# --- linear (r = 1) closed forms ----------------------------------------------


def ou_transition(basis, spec, x, t):
    """Per-mode mean and variance of the r = 1 Galerkin solution at time ``t``
    (constant coefficients, ``Psi = kappa s``, ``Phi = c s``)."""
    if not spec.linear_psi or spec.phi is not None:
        raise ValueError("closed form needs the linear power law and linear Phi")
    if not (spec.psi_scale.is_constant and spec.phi_coef.is_constant):
        raise ValueError("closed form needs time-constant coefficients")
    k = basis.eigenvalues * spec.psi_scale(0.0) - spec.phi_coef(0.0)
    q = spec.q_values(basis.n_modes)
    mean = np.asarray(x, dtype=float) * np.exp(-k * t)
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.where(k != 0, -q * q * np.expm1(-2 * k * t) / (2 * k), q * q * t)
    return mean, var


def ou_expect_exp_h_sq(basis, spec, x, t, s=1.0):
    """``E exp(-s ||X_t(x)||_H^2)`` for the linear model, by per-mode
    Gaussian integrals."""
    m, v = ou_transition(basis, spec, x, t)
    w = s / basis.eigenvalues
    den = 1.0 + 2.0 * w * v
    return float(np.prod(den**-0.5 * np.exp(-w * m * m / den)))


# --- Harnack Monte Carlo --------------------------------------------------------


@dataclass
class HarnackReport:
    """Both sides of the Harnack inequality at one ``(alpha, F, x, y, t)``."""

    alpha: float
    functional: str
    x: np.ndarray
    y: np.ndarray
    t: float
    dist: float
    constant: float
    lhs: float
    rhs: float
    se_lhs: float
    se_rhs: float
    factor: float
    n_paths: int
    holds: bool = field(init=False)

    def __post_init__(self):
        margin = Z_MAX * np.hypot(self.se_lhs, self.se_rhs) if np.isfinite(self.rhs) else 0.0
        self.holds = bool(self.lhs <= self.rhs + margin)


def harnack_sweep(
    basis,
    spec,
    x,
    ys,
    times,
    alphas=(2.0, 4.0),
    functionals: Optional[Dict[str, Callable]] = None,
    n_paths=10_000,
    cfg=None,
):
    """Evaluate the Harnack inequality on a grid of ``(alpha, F, y, t)``.

    Paths from ``x`` and from each ``y`` are simulated once (disjoint path-id
    ranges, so the two sides are independent) and reused for every
    ``alpha``, ``F`` and ``t``.
    """
    functionals = functionals or default_functionals(basis)
    const = spec.constants(basis)
    times = sorted(float(t) for t in times)
    T = max(times)
    run = cfg.with_(T=T)
    x = np.asarray(x, dtype=float)
    ys = [np.asarray(y, dtype=float) for y in ys]

    def endpoints(z, offset):
        res = simulate_paths(basis, spec, z, run, n_paths=n_paths, path_offset=offset, save_times=times)
        if res.n_failed > 0.01 * n_paths:
            raise FloatingPointError(f"{res.n_failed} of {n_paths} paths overflowed")
        return {t: res.at(t) for t in times}

    from_x = endpoints(x, 0)
    reports = []
    for j, y in enumerate(ys):
        from_y = endpoints(y, (j + 1) * n_paths)
        dist = float(h_norm(basis, x - y))
        for t in times:
            c_t = harnack_constant(const, t)
            for name, F in functionals.items():
                fy = F(from_y[t])
                fx = F(from_x[t])
                my, sy = _mean_se(fy)
                for a in alphas:
                    mx, sx = _mean_se(fx**a)
                    fac = harnack_factor(const, a, dist, t)
                    lhs = my**a
                    se_lhs = a * my ** (a - 1.0) * sy
                    with np.errstate(over="ignore", invalid="ignore"):
                        rhs = mx * fac
                        se_rhs = sx * fac
                    reports.append(
                        HarnackReport(
                            alpha=a, functional=name, x=x, y=y, t=t, dist=dist, constant=c_t,
                            lhs=lhs, rhs=rhs, se_lhs=se_lhs,
                            se_rhs=se_rhs if np.isfinite(se_rhs) else 0.0,
                            factor=fac, n_paths=n_paths,
                        )
                    )
    return reports


def verify_harnack_mc(basis, spec, F, alpha, x, y, t, n_paths, cfg, name="F"):
    """Single-point Harnack check; see :func:`harnack_sweep`."""
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    if n_paths < 1000:
        warnings.warn("fewer than 1000 paths; standard errors will be loose", stacklevel=2)
    return harnack_sweep(basis, spec, x, [y], [t], (alpha,), {name: F}, n_paths, cfg)[0]


# --- Girsanov ------------------------------------------------------------------


def girsanov_consistency(basis, spec, x, y, F, T, n_paths, cfg, direct_value=None, alpha_prime=2.0):
    """Compare ``E[R F(Y_T)]`` from the coupled pair with ``P_T F(y)``.

    ``P_T F(y)`` is estimated from independent plain paths started at ``y``
    unless ``direct_value`` (a closed form) is supplied. Also reports the
    normalization ``E R``, the effective sample size of the weights and the
    empirical ``E R^{alpha'}`` against :func:`moment_bound`.
    """
    run = cfg.with_(T=T)
    cp = coupled_simulate(basis, spec, x, y, run, n_paths=n_paths, path_offset=0)
    ok = cp.ok()
    if (~ok).sum() > 0.01 * n_paths:
        raise FloatingPointError(f"{int((~ok).sum())} of {n_paths} coupled paths overflowed")
    w = cp.weights[ok]
    fy = F(cp.y_T[ok])
    rw, rw_se = _mean_se(w * fy)
    mean_r, se_r = _mean_se(w)
    ess = float(w.sum() ** 2 / np.sum(w * w))
    if direct_value is None:
        plain = simulate_paths(basis, spec, y, run, n_paths=n_paths, path_offset=n_paths)
        d, d_se = _mean_se(F(plain.x_T[~plain.failed]))
    else:
        d, d_se = float(direct_value), 0.0
    z = abs(rw - d) / np.hypot(rw_se, d_se)
    rp, rp_se = _mean_se(w**alpha_prime)
    sched = cp.beta
    bound = moment_bound(sched, spec.theta, alpha_prime, run.beta_safety)
    flagged = ess < MIN_ESS
    if flagged:
        warnings.warn(f"effective sample size {ess:.1f} below {MIN_ESS}", stacklevel=2)
    return {
        "reweighted": rw,
        "reweighted_se": rw_se,
        "direct": d,
        "direct_se": d_se,
        "z_score": float(z),
        "mean_R": mean_r,
        "mean_R_se": se_r,
        "z_R": abs(mean_r - 1.0) / se_r,
        "ess": ess,
        "flagged": flagged,
        "coalesced_fraction": float(cp.coalesced[ok].mean()),
        "moment": rp,
        "moment_se": rp_se,
        "moment_bound": bound,
        "moment_ok": bool(rp <= bound * (1.0 + Z_MAX * rp_se / rp)),
        "holder_max_ratio": float(np.max(cp.holder_sum[cp.coalesced]) / holder_budget(sched, run.beta_safety))
        if cp.coalesced.any()
        else float("nan"),
        "n_paths": int(ok.sum()),
    }


def strong_feller_probe(basis, spec, x, radii, T, n_paths, cfg, direction=None):
    """``E|R - 1|`` for ``y = x + rho * direction`` at each radius.

    ``direction`` has unit H-norm (default: along ``e_1``). The same path ids
    are reused across radii. ``envelope`` is ``sqrt(bound(E R^2) - 1)``.
    """
    radii = [float(r) for r in radii]
    if any(r <= 0 for r in radii):
        raise ValueError("radii must be positive")
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly decreasing")
    direction = basis.unit_h_field(1) if direction is None else np.asarray(direction, dtype=float)
    direction = direction / h_norm(basis, direction)
    x = np.asarray(x, dtype=float)
    run = cfg.with_(T=T)
    const = spec.constants(basis)
    rows = []
    for rho in radii:
        y = x + rho * direction
        cp = coupled_simulate(basis, spec, x, y, run, n_paths=n_paths)
        ok = cp.ok()
        dev = np.abs(cp.weights[ok] - 1.0)
        m, se = _mean_se(dev)
        sched = coupling_beta_schedule(const, x, y, T, basis=basis)
        env = np.sqrt(max(moment_bound(sched, spec.theta, 2.0, run.beta_safety) - 1.0, 0.0))
        rows.append({
            "radius": rho,
            "mean_abs_r_minus_1": m,
            "se": se,
            "envelope": float(env),
            "below_envelope": bool(m <= env + Z_MAX * se),
            "coalesced_fraction": float(cp.coalesced[ok].mean()),
        })
    decreasing = all(b["mean_abs_r_minus_1"] <= a["mean_abs_r_minus_1"] + b["se"] for a, b in zip(rows, rows[1:]))
    return {"rows": rows, "decreasing": bool(decreasing)}


# --- density bound ---------------------------------------------------------------


def density_lp_bound(const, mu_samples, x, t, alpha, basis):
    """Upper bound on ``||p_t(x, .)||_{L^alpha(mu)}`` for ``alpha > 1``:

        (mean_y exp[-alpha c_t ||x - y||_H^k])^{-(alpha - 1)/alpha}

    with the mean over invariant-measure samples ``y`` and ``c_t`` the
    Harnack constant. Returns the bound with a delta-method SE; for
    ``alpha = inf`` the exponent is degenerate and ``saturated`` is set.
    """
    ys = np.atleast_2d(np.asarray(mu_samples, dtype=float))
    if ys.shape[0] == 0 or ys.size == 0:
        raise ValueError("empty invariant sample set")
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    if np.isinf(alpha):
        return {"bound": float("inf"), "se": float("nan"), "saturated": True, "c_t": harnack_constant(const, t)}
    k = distance_exponent(const.r, const.theta)
    c_t = harnack_constant(const, t)
    d = h_norm(basis, ys - np.asarray(x, dtype=float))
    e = np.exp(-alpha * c_t * d**k)
    m, se = _mean_se(e)
    pw = -(alpha - 1.0) / alpha
    with np.errstate(divide="ignore", over="ignore"):
        bound = m**pw if m > 0 else float("inf")
        se_b = abs(pw) * m ** (pw - 1.0) * se if m > 0 else float("nan")
    return {"bound": float(bound), "se": float(se_b), "saturated": False, "c_t": c_t, "mean_exp": m}


def binned_density_norm(transition_samples, mu_samples, alpha, n_bins=10, mode=0):
    """Coarse estimate of ``||p_t(x, .)||_{L^alpha(mu)}`` from one coordinate.

    Bins are the ``mu``-quantiles of coefficient ``mode``, so each carries
    mass ``1/n_bins``; the binned density is (transition frequency) /
    (``mu`` frequency). By Jensen this underestimates the true norm.
    """
    xs = np.asarray(transition_samples)[:, mode]
    ms = np.asarray(mu_samples)[:, mode]
    edges = np.quantile(ms, np.linspace(0, 1, n_bins + 1)[1:-1])
    pt = np.bincount(np.searchsorted(edges, xs), minlength=n_bins) / xs.shape[0]
    pm = np.bincount(np.searchsorted(edges, ms), minlength=n_bins) / ms.shape[0]
    dens = np.where(pm > 0, pt / np.where(pm > 0, pm, 1.0), 0.0)
    return float(np.sum(pm * dens**alpha) ** (1.0 / alpha))
