"""Invariant-measure sampling, moment estimates, synchronous contraction and
an ultracontractivity shape probe."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import kernels
from .integrator import StepFailure, brownian_increments, simulate_paths
from .model import drift_and_grid
from .spectral import h_norm, h_norm_sq, lp_norm_power

SAMPLE_HEADER = "# porous-harnack invariant samples v1"


def _mean_se(v):
    v = np.asarray(v, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.shape[0])) if v.shape[0] > 1 else float("nan")


@dataclass
class InvariantSampleSet:
    """Thinned states approximating the invariant measure.

    ``samples`` has shape ``(n, N)``; ``provenance`` records seed and run
    parameters and is written to the header of the CSV file.
    """

    samples: np.ndarray
    burn_in: float
    thinning: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("invariant samples must be finite")

    def __len__(self):
        return self.samples.shape[0]

    def save(self, path):
        meta = dict(self.provenance, burn_in=self.burn_in, thinning=self.thinning)
        with open(path, "w", newline="") as fh:
            fh.write(SAMPLE_HEADER + "\n")
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"a{i + 1}" for i in range(self.samples.shape[1])])
            for row in self.samples:
                w.writerow([format(v, ".17g") for v in row])

    @classmethod
    def load(cls, path):
        with open(path, newline="") as fh:
            first = fh.readline().rstrip("\n")
            if first != SAMPLE_HEADER:
                raise ValueError(f"{path}: not an invariant sample file")
            meta = json.loads(fh.readline()[2:])
            rows = list(csv.reader(fh))
        data = np.array([[float(v) for v in r] for r in rows[1:]])
        burn = meta.pop("burn_in")
        thin = meta.pop("thinning")
        return cls(data.reshape(-1, len(rows[0])), burn, thin, meta)


def _check_stationary(basis, spec):
    const = spec.constants(basis)
    if not const.stationary:
        raise ValueError("invariant sampling needs time-constant coefficients")
    if spec.r == 1.0 and not const.gamma(0.0) < const.delta_sq(0.0) * const.lambda_1:
        raise ValueError("r = 1 needs gamma < delta^2 lambda_1 for an invariant measure")
    return const


def sample_invariant(basis, spec, cfg, n_samples, burn_in=1.0, thinning=0.5, n_chains=1, x0=None):
    """Thinned chain(s) started at ``x0`` (default 0).

    Each of ``n_chains`` independent chains runs ``burn_in`` time units and
    then records a state every ``thinning`` until ``n_samples`` states are
    collected in total. ``cfg.T`` is ignored.
    """
    _check_stationary(basis, spec)
    if n_samples < 1 or n_chains < 1:
        raise ValueError("n_samples and n_chains must be positive")
    per_chain = -(-n_samples // n_chains)
    save = [burn_in + k * thinning for k in range(per_chain)]
    T = save[-1]
    run = cfg.with_(T=T) if T > 0 else cfg
    x0 = np.zeros(basis.n_modes) if x0 is None else np.asarray(x0, dtype=float)
    res = simulate_paths(basis, spec, x0, run, n_paths=n_chains, save_times=save)
    if res.n_failed:
        raise StepFailure(f"{res.n_failed} chains blew up during invariant sampling")
    # steps -> (n_saves, n_chains, N); order chain-major so a single chain stays contiguous
    idx = [int(np.searchsorted(res.save_steps, int(round(s / run.dt)))) for s in save]
    snaps = res.snapshots[idx].transpose(1, 0, 2).reshape(-1, basis.n_modes)[:n_samples]
    prov = {
        "seed": int(cfg.seed),
        "dt": cfg.dt,
        "n_chains": int(n_chains),
        "taming": bool(cfg.taming),
        "r": spec.r,
        "n_modes": basis.n_modes,
        "kind": basis.kind,
    }
    return InvariantSampleSet(snaps, burn_in, thinning, prov)


def moment_report(samples, spec, basis, eps0_grid=(0.01, 0.05)):
    """Moments of the invariant measure with standard errors.

    ``exp_moments[eps0]`` is the mean of ``exp(eps0 ||z||_H^{r+1})``;
    ``doubling_drift`` compares the estimate on the first half of the samples
    with the full-sample estimate, in units of the half-sample SE.
    """
    z = samples.samples if isinstance(samples, InvariantSampleSet) else np.atleast_2d(samples)
    n = z.shape[0]
    if n < 2:
        raise ValueError("need at least two samples")
    p = spec.r + 1.0
    lr, lr_se = _mean_se(lp_norm_power(basis, z, p))
    hp = h_norm(basis, z) ** p
    out = {"lr_moment": lr, "lr_moment_se": lr_se, "n": n, "exp_moments": {}}
    for e0 in eps0_grid:
        v = np.exp(e0 * hp)
        full, full_se = _mean_se(v)
        half, half_se = _mean_se(v[: n // 2])
        drift = abs(full - half) / half_se if half_se > 0 else 0.0
        out["exp_moments"][float(e0)] = {
            "mean": full,
            "se": full_se,
            "half_mean": half,
            "doubling_drift": float(drift),
            "stable": bool(drift < 2.0),
        }
    return out


def contraction_envelope(u0, t, delta_sq, lambda_1, r):
    """Solution of ``u' = -delta^2 lambda_1^{(r+1)/2} u^{(r+1)/2}``, ``u(0) = u0``.

    Bounds ``||X_t(x) - X_t(y)||_H^2`` under synchronous coupling via
    ``||.||_{r+1} >= ||.||_2 >= sqrt(lambda_1) ||.||_H``.
    """
    k = delta_sq * lambda_1 ** ((r + 1) / 2)
    t = np.asarray(t, dtype=float)
    if r == 1:
        return u0 * np.exp(-k * t)
    if u0 == 0:
        return np.zeros_like(t)
    return (u0 ** (-(r - 1) / 2) + k * (r - 1) / 2 * t) ** (-2.0 / (r - 1))


def contraction_check(basis, spec, x, y, cfg, path_id=0, rtol=1e-8, env_rtol=1e-6):
    """Synchronous coupling: both copies driven by the same noise and no
    extra drift.

    Returns the trace of ``||X_t - Y_t||_H``, whether it is non-increasing at
    every step (relative tolerance ``rtol``) and whether it stays below the
    envelope of :func:`contraction_envelope`.
    """
    const = spec.constants(basis)
    if max(const.gamma.values) > 0:
        raise ValueError("contraction check needs gamma <= 0")
    q = spec.q_values(basis.n_modes)
    pair = np.vstack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
    ids = np.array([path_id], dtype=np.uint64)
    n = cfg.n_steps
    trace = np.empty(n + 1)
    trace[0] = float(h_norm(basis, pair[0] - pair[1]))
    for step in range(n):
        t = step * cfg.dt
        dw = brownian_increments(cfg.seed, ids, step, basis.n_modes, cfg.dt) if cfg.noise else np.zeros((1, basis.n_modes))
        b, _ = drift_and_grid(basis, spec, t, pair)
        pair, nb = kernels.tamed_update(pair, b, basis.inv_eigenvalues, cfg.dt, cfg.taming, q, np.repeat(dw, 2, axis=0))
        if not np.all(np.isfinite(pair)):
            raise StepFailure(f"non-finite state at step {step}")
        trace[step + 1] = float(h_norm(basis, pair[0] - pair[1]))
    times = np.arange(n + 1) * cfg.dt
    inc = np.diff(trace)
    monotone = bool(np.all(inc <= rtol * trace[:-1]))
    env = np.sqrt(contraction_envelope(trace[0] ** 2, times, const.delta_sq(0.0), const.lambda_1, spec.r))
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(env > 0, trace / env, 0.0)
    return {
        "times": times,
        "trace": trace,
        "envelope": env,
        "monotone": monotone,
        "max_increase": float(np.max(inc / np.maximum(trace[:-1], 1e-300))) if n else 0.0,
        "envelope_ok": bool(np.all(trace <= env * (1.0 + env_rtol) + 1e-300)),
        "max_envelope_ratio": float(np.max(ratio)),
    }


def exp_h_test_function(basis, spec, eps0, mu_samples):
    """``f(z) = exp(eps0 ||z||_H^{r+1}/2)`` normalized so ``mu(f^2) = 1``
    on the given samples. Returns ``log f`` (vectorized) to keep large values
    representable."""
    p = spec.r + 1.0
    log_norm = 0.5 * np.log(np.mean(np.exp(eps0 * h_norm(basis, mu_samples) ** p)))
    return lambda z: 0.5 * eps0 * h_norm(basis, z) ** p - log_norm


def _log_mean_exp(v):
    m = np.max(v)
    return float(m + np.log(np.mean(np.exp(v - m))))


def _shape(t, a, b, p):
    return a + b * t ** (-p)


def ultracontractivity_probe(basis, spec, log_f, t_grid, x_grid, cfg, n_paths=200):
    """Monte Carlo ``log (P_t f)^2(x)`` over a ``(t, x)`` grid and a fit of the
    sup over ``x`` to ``log a + b t^{-p}``.

    ``log_f`` returns ``log f`` on a batch of fields. The theoretical
    exponent is ``p = (r + 1)/(r - 1)``. ``cross_check`` fits
    ``log (P_t f)^2(x) = a0 + c (||x||_H + 1)^k / t^{(4+theta)/(2+theta)}`` and
    reports the worst residual (uniformity over the grid).
    """
    if spec.r <= 1:
        raise ValueError("ultracontractivity shape needs r > 1")
    t_grid = np.array(sorted(float(t) for t in t_grid))
    T = float(t_grid[-1])
    run = cfg.with_(T=T)
    table = np.empty((len(x_grid), len(t_grid)))
    for j, x in enumerate(x_grid):
        res = simulate_paths(basis, spec, x, run, n_paths=n_paths, path_offset=j * n_paths, save_times=t_grid)
        for k, t in enumerate(t_grid):
            table[j, k] = 2.0 * _log_mean_exp(log_f(res.at(t)))
    sup = table.max(axis=0)
    fit = {"ok": False}
    try:
        popt, pcov = optimize.curve_fit(
            _shape, t_grid, sup,
            p0=(sup[-1], sup[0] * t_grid[0] ** 3, 3.0),
            bounds=([-np.inf, 0.0, 0.1], [np.inf, np.inf, 10.0]),
            maxfev=20000,
        )
        resid = sup - _shape(t_grid, *popt)
        fit = {
            "ok": True,
            "log_a": float(popt[0]),
            "b": float(popt[1]),
            "exponent": float(popt[2]),
            "exponent_se": float(np.sqrt(pcov[2, 2])) if np.isfinite(pcov[2, 2]) else float("nan"),
            "max_abs_residual": float(np.max(np.abs(resid))),
        }
    except (RuntimeError, ValueError) as exc:
        fit["error"] = str(exc)
    k = 2.0 * (3.0 - spec.r + spec.theta) / (2.0 + spec.theta)
    tp = (4.0 + spec.theta) / (2.0 + spec.theta)
    xn = np.array([float(h_norm(basis, x)) for x in x_grid])
    g = ((xn[:, None] + 1.0) ** k) / t_grid[None, :] ** tp
    A = np.column_stack([np.ones(g.size), g.ravel()])
    coef, *_ = np.linalg.lstsq(A, table.ravel(), rcond=None)
    resid = table.ravel() - A @ coef
    cross = {"c_hat": float(coef[1]), "max_abs_residual": float(np.max(np.abs(resid)))}
    return {"t_grid": t_grid, "table": table, "sup": sup, "fit": fit, "theory_exponent": (spec.r + 1) / (spec.r - 1), "cross_check": cross}
