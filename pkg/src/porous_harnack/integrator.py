"""Tamed Euler-Maruyama for the Galerkin system and the coalescent coupling.

Noise for path ``p`` at step ``n`` and mode ``i`` is a deterministic function
of ``(seed, path_id, n, i)`` (Philox4x64 counter-based streams), so results
do not depend on how paths are grouped into batches or spread over workers.
Paths are processed in fixed chunks of ``PathConfig.chunk_size`` ids and
reassembled in id order.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import kernels
from .coefficients import as_piecewise, exp_weighted_integral
from .model import drift_and_grid
from .spectral import h_norm, h_norm_sq, lp_norm_power

NOISE_STREAM = 0


class StepFailure(FloatingPointError):
    """Non-finite state produced by a step."""


@dataclass(frozen=True)
class PathConfig:
    """Time-stepping and Monte Carlo controls.

    ``beta_safety`` multiplies the coupling strength; ``tol_coal`` is the
    H-norm distance at which the coupled pair is glued.
    """

    T: float = 1.0
    dt: float = 1e-4
    seed: int = 0
    taming: bool = True
    tol_coal: float = 1e-6
    beta_safety: float = 1.05
    noise: bool = True
    chunk_size: int = 2048
    workers: int = 1

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("T must be >= 0")
        if self.T > 0 and not 0 < self.dt < self.T + 1e-15:
            raise ValueError("need 0 < dt <= T")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.tol_coal <= 0:
            raise ValueError("tol_coal must be positive")
        if self.beta_safety < 1:
            raise ValueError("beta_safety must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.chunk_size < 1 or self.workers < 1:
            raise ValueError("chunk_size and workers must be positive")

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    def with_(self, **kw):
        return replace(self, **kw)


def brownian_increments(seed, path_ids, step, n_modes, dt, stream=NOISE_STREAM):
    """N(0, dt) increments, shape (len(path_ids), n_modes)."""
    return np.sqrt(dt) * kernels.gaussian_block(seed, path_ids, step, stream, n_modes)


def em_step(basis, spec, state, t, dt, noise, taming=True, q=None):
    """One tamed Euler-Maruyama step.

    ``a_i <- a_i + b_i dt / (1 + dt ||b||_H) + q_i noise_i`` with ``b`` the
    Galerkin drift; ``noise`` holds N(0, dt) draws per mode.
    """
    a = np.atleast_2d(np.asarray(state, dtype=float))
    dw = np.atleast_2d(np.asarray(noise, dtype=float))
    q = spec.q_values(basis.n_modes) if q is None else q
    b, _ = drift_and_grid(basis, spec, t, a)
    out, nb = kernels.tamed_update(a, b, basis.inv_eigenvalues, dt, taming, q, dw)
    if not np.all(np.isfinite(nb)) or not np.all(np.isfinite(out)):
        raise StepFailure(f"non-finite state at t={t:.6g}; max |a|={np.nanmax(np.abs(a)):.3e}")
    return out if np.ndim(state) > 1 else out[0]


def _chunks(n_paths, offset, size):
    ids = np.arange(offset, offset + n_paths, dtype=np.uint64)
    return [ids[i : i + size] for i in range(0, n_paths, size)]


def _map_chunks(fn, chunks, workers):
    if workers <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


# --- plain paths ----------------------------------------------------------


@dataclass
class PathBatch:
    """Result of :func:`simulate_paths`.

    ``snapshots[k]`` holds the states at ``save_steps[k]``; ``energy_h`` and
    ``energy_lr`` are per-step path means of ``||X_t||_H^2`` and
    ``||X_t||_{r+1}^{r+1}`` over non-failed paths.
    """

    x_T: np.ndarray
    times: np.ndarray
    save_steps: np.ndarray
    snapshots: np.ndarray
    energy_h: np.ndarray
    energy_lr: np.ndarray
    failed: np.ndarray

    @property
    def n_failed(self):
        return int(self.failed.sum())

    def at(self, t):
        """States (non-failed paths only) at the saved time closest to ``t``."""
        k = int(np.argmin(np.abs(self.times[self.save_steps] - t)))
        return self.snapshots[k][~self.failed]


def _simulate_chunk(basis, spec, x0, cfg, ids, save_steps, record_energy):
    n = ids.shape[0]
    a = np.array(np.broadcast_to(x0, (n, basis.n_modes)), dtype=float)
    q = spec.q_values(basis.n_modes)
    p = spec.r + 1.0
    n_steps = cfg.n_steps
    snaps = np.empty((len(save_steps), n, basis.n_modes))
    save_at = {int(s): k for k, s in enumerate(save_steps)}
    e_h = np.zeros(n_steps + 1) if record_energy else None
    e_l = np.zeros(n_steps + 1) if record_energy else None
    failed = np.zeros(n, dtype=bool)
    alive = np.ones(n, dtype=bool)
    for step in range(n_steps + 1):
        t = step * cfg.dt
        if step in save_at:
            snaps[save_at[step]] = a
        need_grid = record_energy or step < n_steps
        if not need_grid:
            break
        b, grid = drift_and_grid(basis, spec, t, a)
        if record_energy:
            ok = ~failed
            e_h[step] = h_norm_sq(basis, a[ok]).sum()
            lr = lp_norm_power(basis, a, p, grid=grid) if grid is not None else lp_norm_power(basis, a, p)
            e_l[step] = lr[ok].sum()
        if step == n_steps:
            break
        if cfg.noise:
            dw = brownian_increments(cfg.seed, ids, step, basis.n_modes, cfg.dt)
        else:
            dw = np.zeros_like(a)
        a_new, nb = kernels.tamed_update(a, b, basis.inv_eigenvalues, cfg.dt, cfg.taming, q, dw)
        bad = ~np.isfinite(nb) | ~np.all(np.isfinite(a_new), axis=1)
        if bad.any():
            failed |= bad
            a_new[failed] = 0.0
        a = a_new
    alive = ~failed
    return a, snaps, e_h, e_l, failed, alive


def simulate_paths(basis, spec, x0, cfg, n_paths=1, path_offset=0, save_times=(), record_energy=False):
    """Simulate ``n_paths`` independent Galerkin paths from ``x0``.

    Overflowing paths are flagged in ``failed`` (their states are zeroed and
    excluded from energy means) rather than aborting the batch.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[-1] != basis.n_modes:
        raise ValueError("initial field has the wrong number of modes")
    n_steps = cfg.n_steps
    times = np.arange(n_steps + 1) * cfg.dt
    save_steps = np.array(sorted({int(round(t / cfg.dt)) for t in save_times} | {n_steps}), dtype=int)
    if save_steps.max() > n_steps:
        raise ValueError("save time beyond the horizon")
    chunks = _chunks(n_paths, path_offset, cfg.chunk_size)
    parts = _map_chunks(
        lambda ids: _simulate_chunk(basis, spec, x0, cfg, ids, save_steps, record_energy),
        chunks,
        cfg.workers,
    )
    failed = np.concatenate([p[4] for p in parts])
    n_ok = max(int((~failed).sum()), 1)
    if record_energy:
        e_h = sum(p[2] for p in parts) / n_ok
        e_l = sum(p[3] for p in parts) / n_ok
    else:
        e_h = e_l = np.empty(0)
    return PathBatch(
        x_T=np.concatenate([p[0] for p in parts]),
        times=times,
        save_steps=save_steps,
        snapshots=np.concatenate([p[1] for p in parts], axis=1),
        energy_h=e_h,
        energy_lr=e_l,
        failed=failed,
    )


def simulate_path(basis, spec, x0, cfg, path_id=0):
    """Single path; returns ``(X_T, energy_h_trace, energy_lr_trace)``."""
    res = simulate_paths(basis, spec, x0, cfg, n_paths=1, path_offset=path_id, record_energy=True)
    if res.n_failed:
        raise StepFailure("path overflowed")
    return res.x_T[0], res.energy_h, res.energy_lr


# --- coupling --------------------------------------------------------------


@dataclass(frozen=True)
class BetaSchedule:
    """``beta_t = c delta_t xi_t exp(-(eps/2) int_0^t gamma)``.

    ``c = 2 ||x - y||_H^eps / (eps int_0^T delta xi exp(-eps int gamma) ds)``,
    which makes ``int_0^T exp(-(eps/2) int gamma) beta_t dt`` equal
    ``(2/eps) ||x - y||_H^eps`` exactly.
    """

    c: float
    eps: float
    T: float
    dist: float
    delta_xi: object
    gamma: object

    def __call__(self, t):
        g = self.gamma.integral(t)
        return self.c * self.delta_xi(t) * np.exp(-0.5 * self.eps * g)

    def beta_sq_integral(self, t_end=None):
        t_end = self.T if t_end is None else t_end
        dxi_sq = self.delta_xi.map(lambda v: v * v)
        return self.c**2 * exp_weighted_integral(dxi_sq, self.gamma, self.eps, t_end)

    def coalescence_integral(self):
        """Exact ``int_0^T exp(-(eps/2) int gamma) beta dt``."""
        return self.c * exp_weighted_integral(self.delta_xi, self.gamma, self.eps, self.T)

    def coalescence_target(self):
        return 2.0 / self.eps * self.dist**self.eps


def coupling_beta_schedule(const, x, y, T, basis=None, dist=None):
    """Coupling strength for start points ``x != y`` and horizon ``T``.

    ``const`` is a :class:`~porous_harnack.model.StructuralConstants`. The
    saturation of the coalescence criterion is re-checked by adaptive
    quadrature; a shortfall beyond 1e-8 relative raises.
    """
    from scipy import integrate

    if dist is None:
        dist = float(h_norm(basis, np.asarray(x) - np.asarray(y)))
    if dist <= 0:
        raise ValueError("coupling needs x != y")
    eps = const.eps
    delta_xi = const.delta_xi
    gamma = as_piecewise(const.gamma)
    denom = eps * exp_weighted_integral(delta_xi, gamma, eps, T)
    sched = BetaSchedule(2.0 * dist**eps / denom, eps, T, dist, delta_xi, gamma)
    pts = [b for b in set(delta_xi.breaks) | set(gamma.breaks) if b < T]
    val, _ = integrate.quad(
        lambda s: np.exp(-0.5 * eps * gamma.integral(s)) * sched(s),
        0.0,
        T,
        points=pts or None,
        epsabs=0.0,
        epsrel=1e-12,
        limit=200,
    )
    if val < sched.coalescence_target() * (1.0 - 1e-8):
        raise ArithmeticError("coupling schedule fails the coalescence criterion")
    return sched


def coupling_drift(basis, diff, eps, beta_t):
    """``beta_t * diff / ||diff||_H^eps``; zero where ``diff`` vanishes."""
    if not 0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 1/2]")
    d = np.asarray(diff, dtype=float)
    n = h_norm(basis, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(n > 0, beta_t / np.where(n > 0, n, 1.0) ** eps, 0.0)
    return d * np.asarray(scale)[..., None] if d.ndim > 1 else d * float(scale)


@dataclass
class CoupledOutcome:
    """Per-path results of :func:`coupled_simulate`.

    ``log_r = -girsanov_i - girsanov_v / 2`` where ``girsanov_i`` accumulates
    ``<zeta, dB>`` and ``girsanov_v`` accumulates ``||zeta||_2^2 dt``; under
    the reweighted measure the coupled path ``Y`` has the law of the plain
    path from ``y``. ``tau`` is NaN on paths that did not coalesce.
    """

    tau: np.ndarray
    coalesced: np.ndarray
    log_r: np.ndarray
    girsanov_i: np.ndarray
    girsanov_v: np.ndarray
    holder_sum: np.ndarray
    x_T: np.ndarray
    y_T: np.ndarray
    failed: np.ndarray
    beta: Optional[BetaSchedule]

    @property
    def weights(self):
        return np.exp(self.log_r)

    def ok(self):
        return ~self.failed


def _coupled_chunk(basis, spec, x, y, cfg, ids, beta_fn, eps, theta):
    n = ids.shape[0]
    N = basis.n_modes
    q = spec.q_values(N)
    inv_q = 1.0 / q
    inv_lam = basis.inv_eigenvalues
    X = np.array(np.broadcast_to(x, (n, N)), dtype=float)
    Y = np.array(np.broadcast_to(y, (n, N)), dtype=float)
    active = np.ones(n, dtype=bool)
    failed = np.zeros(n, dtype=bool)
    tau = np.full(n, np.nan)
    g_i = np.zeros(n)
    g_v = np.zeros(n)
    holder = np.zeros(n)
    dt = cfg.dt
    kappa = cfg.beta_safety
    for step in range(cfg.n_steps):
        t = step * dt
        if cfg.noise:
            dw = brownian_increments(cfg.seed, ids, step, N, dt)
        else:
            dw = np.zeros((n, N))
        bx, _ = drift_and_grid(basis, spec, t, X)
        X_new, nbx = kernels.tamed_update(X, bx, inv_lam, dt, cfg.taming, q, dw)
        act = np.flatnonzero(active)
        if act.size:
            Ya = Y[act]
            D = X[act] - Ya
            nd = np.sqrt(h_norm_sq(basis, D))
            gain = kappa * beta_fn(t) / nd**eps
            # cap so the coupling increment cannot push Y past X
            gain = np.minimum(gain, 1.0 / dt)
            v = gain[:, None] * D
            zeta = v * inv_q
            g_i[act] += np.sum(zeta * dw[act], axis=1)
            g_v[act] += np.sum(zeta * zeta, axis=1) * dt
            qn = np.sqrt(np.sum((D * inv_q) ** 2, axis=1))
            beff = gain * nd**eps
            holder[act] += beff**2 * qn ** (2 + theta) / nd ** ((2 + theta) * eps) * dt
            by, _ = drift_and_grid(basis, spec, t, Ya)
            Ya_new, nby = kernels.tamed_update(Ya, by, inv_lam, dt, cfg.taming, q, dw[act])
            Ya_new += dt * v
            bad_y = ~np.isfinite(nby) | ~np.all(np.isfinite(Ya_new), axis=1)
            Y[act] = Ya_new
            nd_new = np.sqrt(h_norm_sq(basis, X_new[act] - Ya_new))
            glue = (nd_new <= cfg.tol_coal) & ~bad_y
            if glue.any():
                gi = act[glue]
                tau[gi] = t + dt
                active[gi] = False
            if bad_y.any():
                failed[act[bad_y]] = True
                active[act[bad_y]] = False
        bad_x = ~np.isfinite(nbx) | ~np.all(np.isfinite(X_new), axis=1)
        if bad_x.any():
            failed |= bad_x
            active &= ~bad_x
            X_new[bad_x] = 0.0
        X = X_new
        coal = ~active & ~failed
        Y[coal] = X[coal]
    Y[failed] = 0.0
    coalesced = ~np.isnan(tau) & ~failed
    return tau, coalesced, g_i, g_v, holder, X, Y, failed


def coupled_simulate(basis, spec, x, y, cfg, n_paths=1, path_offset=0, beta: Optional[Callable] = None):
    """Run the coupled pair ``(X, Y)`` from ``(x, y)`` with shared noise.

    ``Y`` carries the extra drift ``kappa beta_t (X - Y)/||X - Y||_H^eps``
    until ``||X - Y||_H <= tol_coal``; then ``Y`` is set to ``X`` and the
    Girsanov accumulators freeze. ``beta`` defaults to the schedule of
    :func:`coupling_beta_schedule`; a float gives a constant strength.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if float(h_norm(basis, x - y)) <= 0:
        raise ValueError("coupled_simulate needs x != y")
    eps = spec.eps
    sched = None
    if beta is None:
        sched = coupling_beta_schedule(spec.constants(basis), x, y, cfg.T, basis=basis)
        beta_fn = sched
    elif callable(beta):
        beta_fn = beta
    else:
        bval = float(beta)
        beta_fn = lambda t: bval  # noqa: E731
    chunks = _chunks(n_paths, path_offset, cfg.chunk_size)
    parts = _map_chunks(
        lambda ids: _coupled_chunk(basis, spec, x, y, cfg, ids, beta_fn, eps, spec.theta),
        chunks,
        cfg.workers,
    )
    cat = [np.concatenate([p[k] for p in parts]) for k in range(8)]
    tau, coalesced, g_i, g_v, holder, X, Y, failed = cat
    return CoupledOutcome(
        tau=tau,
        coalesced=coalesced,
        log_r=-g_i - 0.5 * g_v,
        girsanov_i=g_i,
        girsanov_v=g_v,
        holder_sum=holder,
        x_T=X,
        y_T=Y,
        failed=failed,
        beta=sched,
    )
