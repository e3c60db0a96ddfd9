import numpy as np
import pytest
from scipy import integrate

from porous_harnack.coefficients import PiecewiseConstant
from porous_harnack.integrator import (
    PathConfig,
    StepFailure,
    brownian_increments,
    coupled_simulate,
    coupling_beta_schedule,
    coupling_drift,
    em_step,
    simulate_path,
    simulate_paths,
)
from porous_harnack.model import ModelSpec
from porous_harnack.spectral import build_basis, h_inner, h_norm, h_norm_sq


def test_path_config_validation():
    with pytest.raises(ValueError):
        PathConfig(T=1.0, dt=2.0)
    with pytest.raises(ValueError):
        PathConfig(tol_coal=0.0)
    with pytest.raises(ValueError):
        PathConfig(beta_safety=0.9)
    assert PathConfig(T=1.0, dt=1e-3).n_steps == 1000


def test_em_step_zero_state(sine8, porous):
    np.testing.assert_array_equal(em_step(sine8, porous, np.zeros(8), 0.0, 1e-3, np.zeros(8)), 0.0)


def test_em_step_linear_decay(sine8, linear):
    a = np.eye(8)[0]
    out = em_step(sine8, linear, a, 0.0, 1e-4, np.zeros(8), taming=False)
    assert out[0] == pytest.approx(1 - np.pi**2 * 1e-4, rel=1e-12)
    tamed = em_step(sine8, linear, a, 0.0, 1e-4, np.zeros(8), taming=True)
    nb = np.pi  # ||b||_H = pi^2 / sqrt(lambda_1) for b = -pi^2 e_1
    assert tamed[0] == pytest.approx(1 - np.pi**2 * 1e-4 / (1 + 1e-4 * nb), rel=1e-12)


def test_em_step_overflow_raises(sine8, porous):
    with pytest.raises(StepFailure):
        em_step(sine8, porous, np.full(8, np.inf), 0.0, 1e-3, np.zeros(8))


def test_zero_horizon_returns_initial(sine8, porous):
    x0 = np.arange(8.0) / 10
    xT, eh, el = simulate_path(sine8, porous, x0, PathConfig(T=0.0, dt=1e-3))
    np.testing.assert_array_equal(xT, x0)
    assert eh.shape == (1,)


def test_linear_decay_scalar_oracle(sine4, linear):
    res = simulate_paths(sine4, linear, np.eye(4)[0], PathConfig(T=0.1, dt=1e-5, noise=False, taming=False))
    assert res.x_T[0, 0] == pytest.approx(np.exp(-np.pi**2 * 0.1), rel=1e-4)


def test_strong_order_one_for_additive_noise(sine4, linear):
    # strong error against a fine reference driven by the summed increments
    x0 = np.array([1.0, -0.5, 0.2, 0.1])
    fine = PathConfig(T=0.128, dt=1e-5, seed=9, taming=False)
    n_paths = 200
    ids = np.arange(n_paths, dtype=np.uint64)
    q = linear.q_values(4)

    def run(level):
        m = 2**level
        dt = fine.dt * m
        a = np.tile(x0, (n_paths, 1))
        for k in range(fine.n_steps // m):
            dw = sum(brownian_increments(fine.seed, ids, k * m + j, 4, fine.dt) for j in range(m))
            a = em_step(sine4, linear, a, k * dt, dt, dw, taming=False, q=q)
        return a

    ref = run(0)
    errs = [np.sqrt(np.mean(np.sum((run(L) - ref) ** 2, axis=1))) for L in (4, 5, 6)]
    ratios = [errs[1] / errs[0], errs[2] / errs[1]]
    assert all(1.6 < r < 2.5 for r in ratios), (errs, ratios)


@pytest.mark.slow
def test_ou_variance_oracle(sine4, linear):
    res = simulate_paths(sine4, linear, np.zeros(4), PathConfig(T=1.0, dt=1e-4, seed=2), n_paths=10_000)
    s2 = res.x_T[:, 0] ** 2
    target = (1 - np.exp(-2 * np.pi**2)) / (2 * np.pi**2)
    assert target == pytest.approx(0.050660, abs=1e-6)
    assert abs(s2.mean() - target) <= 3 * s2.std(ddof=1) / np.sqrt(s2.size)


def test_porous_energy_bounded(sine8, porous):
    res = simulate_paths(sine8, porous, np.zeros(8), PathConfig(T=5.0, dt=1e-3, seed=3), n_paths=20, record_energy=True)
    assert res.n_failed == 0
    assert np.all(np.isfinite(res.energy_lr))
    late = res.energy_lr[len(res.energy_lr) // 2 :]
    assert late.mean() < 10 * res.energy_lr[len(res.energy_lr) // 10 :].mean() + 1.0


def test_results_independent_of_chunking_and_workers(sine8, porous):
    cfg = PathConfig(T=0.05, dt=1e-3, seed=4, chunk_size=7)
    a = simulate_paths(sine8, porous, np.zeros(8), cfg, n_paths=30, record_energy=True)
    b = simulate_paths(sine8, porous, np.zeros(8), cfg.with_(workers=3), n_paths=30, record_energy=True)
    np.testing.assert_array_equal(a.x_T, b.x_T)
    np.testing.assert_array_equal(a.energy_h, b.energy_h)
    # a different batch shape reproduces each path up to matmul rounding
    one = simulate_paths(sine8, porous, np.zeros(8), cfg, n_paths=1, path_offset=11)
    np.testing.assert_allclose(one.x_T[0], a.x_T[11], rtol=0, atol=1e-14)


# --- coupling ----------------------------------------------------------------------


def _unit_const(sine16, spec=None):
    return (spec or ModelSpec()).constants(sine16)


def test_beta_schedule_examples(sine16):
    const = _unit_const(sine16)
    s = coupling_beta_schedule(const, None, None, 1.0, dist=1.0)
    assert s.c == pytest.approx(5.0)
    assert s(0.3) == pytest.approx(5.0)
    assert s.coalescence_integral() == pytest.approx(5.0)
    assert s.coalescence_target() == pytest.approx(5.0)
    s2 = coupling_beta_schedule(const, None, None, 1.0, dist=2**2.5)
    assert s2.c == pytest.approx(10.0)
    with pytest.raises(ValueError):
        coupling_beta_schedule(const, None, None, 1.0, dist=0.0)


def test_beta_schedule_time_dependent_saturates(sine16):
    spec = ModelSpec(psi_scale=PiecewiseConstant((1.0, 2.0), (0.4,)), phi_coef=PiecewiseConstant((0.5, -0.3), (0.7,)))
    const = spec.constants(sine16)
    s = coupling_beta_schedule(const, None, None, 1.0, dist=0.3)
    g = const.gamma
    val, _ = integrate.quad(lambda t: np.exp(-0.5 * s.eps * g.integral(t)) * s(t), 0, 1, points=[0.4, 0.7], epsrel=1e-12)
    assert val == pytest.approx(s.coalescence_target(), rel=1e-9)
    sq, _ = integrate.quad(lambda t: s(t) ** 2, 0, 1, points=[0.4, 0.7], epsrel=1e-12)
    assert s.beta_sq_integral() == pytest.approx(sq, rel=1e-9)


def test_coupling_drift_examples(sine16):
    assert np.all(coupling_drift(sine16, np.zeros(16), 0.4, 5.0) == 0)
    d = sine16.unit_h_field(3)
    assert h_norm(sine16, coupling_drift(sine16, d, 0.4, 5.0)) == pytest.approx(5.0)
    d2 = 0.01 * d
    assert h_norm(sine16, coupling_drift(sine16, d2, 0.4, 5.0)) == pytest.approx(5.0 * 0.01**0.6)
    with pytest.raises(ValueError):
        coupling_drift(sine16, d, 0.7, 1.0)


@pytest.mark.parametrize("eps", [0.25, 0.4, 0.5])
def test_coupling_drift_dissipative(sine16, eps):
    rng = np.random.default_rng(int(eps * 100))
    z, x, y = (rng.standard_normal((10_000, 16)) * rng.exponential(1.0, (10_000, 1)) for _ in range(3))
    ax = coupling_drift(sine16, z - x, eps, 1.0)
    ay = coupling_drift(sine16, z - y, eps, 1.0)
    assert np.max(h_inner(sine16, ax - ay, x - y)) <= 1e-12


def test_coupled_rejects_equal_start(sine8, porous):
    with pytest.raises(ValueError):
        coupled_simulate(sine8, porous, np.zeros(8), np.zeros(8), PathConfig(T=0.1, dt=1e-3))


def test_deterministic_skeleton(sine16):
    spec = ModelSpec(psi_scale=0.0)
    x = np.zeros(16)
    y = sine16.unit_h_field(1)
    cfg = PathConfig(T=1.0, dt=1e-4, noise=False, beta_safety=1.0)
    out = coupled_simulate(sine16, spec, x, y, cfg, beta=5.0)
    assert out.coalesced[0]
    assert out.tau[0] == pytest.approx(0.5, rel=0.01)


def test_coupled_invariants(sine8, porous):
    x, y = np.zeros(8), 0.25 * sine8.unit_h_field(1)
    cfg = PathConfig(T=1.0, dt=1e-3, seed=5)
    out = coupled_simulate(sine8, porous, x, y, cfg, n_paths=64)
    assert out.coalesced.mean() >= 0.95
    c = out.coalesced
    np.testing.assert_array_equal(out.x_T[c], out.y_T[c])
    assert np.all(np.isfinite(out.log_r[c]))
    np.testing.assert_allclose(out.log_r, -out.girsanov_i - 0.5 * out.girsanov_v)
    assert np.all(out.girsanov_v >= 0)
    assert np.all(out.tau[c] <= cfg.T + 1e-12)
    np.testing.assert_array_equal(out.holder_sum >= 0, True)


def test_girsanov_quadratic_variation_matches_formula(sine8, porous):
    # single step: V = (kappa beta)^2 ||D||_Q^2 / ||D||_H^{2 eps} dt with D = x - y
    x, y = np.zeros(8), 0.25 * sine8.unit_h_field(2)
    # the gain kappa beta ||D||_H^{-eps} is capped at 1/dt
    d = x - y
    for beta, dt in ((1e4, 1e-3), (5.0, 1e-3)):
        cfg = PathConfig(T=dt, dt=dt, seed=6)
        out = coupled_simulate(sine8, porous, x, y, cfg, n_paths=3, beta=beta)
        gain = min(beta * cfg.beta_safety / h_norm_sq(sine8, d) ** (porous.eps / 2), 1 / dt)
        expected = gain**2 * np.sum(d * d) * dt
        np.testing.assert_allclose(out.girsanov_v, expected, rtol=1e-12)
    assert gain < 1 / dt


def test_synchronous_coupling_monotone(sine8):
    spec = ModelSpec(phi_coef=-0.2)
    from porous_harnack.ergodics import contraction_check

    res = contraction_check(sine8, spec, sine8.unit_h_field(1), -sine8.unit_h_field(2), PathConfig(T=0.3, dt=1e-4, seed=1, taming=False))
    assert res["monotone"]
