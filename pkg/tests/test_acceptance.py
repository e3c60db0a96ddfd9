"""Acceptance criteria, one test each.

Every test prints a single ``criterion NN PASS|FAIL`` line (also collected in
the terminal summary). Run standalone with ``python tests/test_acceptance.py``
or through pytest; both use the shipped configs and their seeds.
"""

import sys
import tempfile
import time

import numpy as np
import pytest
from scipy import integrate

from porous_harnack import ModelSpec, build_basis
from porous_harnack import ergodics, harnack, model
from porous_harnack.experiments import load_config, run_experiment, validate_config
from porous_harnack.integrator import PathConfig, coupling_drift, simulate_paths
from porous_harnack.spectral import h_inner, h_norm_sq, lp_norm_power

RESULTS = {}


def _record(n, title, ok, elapsed, budget, detail):
    fast = elapsed <= budget
    status = "PASS" if ok and fast else "FAIL"
    line = f"criterion {n:02d} {status}  {title}: {detail} [{elapsed:.1f} s of {budget:g} s]"
    RESULTS[n] = line
    print(line)
    return ok and fast, line


def _config(name, suites, **suite_overrides):
    raw = load_config(name)
    raw["suites"] = suites
    for k, v in suite_overrides.items():
        raw.setdefault("suite", {}).setdefault(k, {}).update(v)
    return validate_config(raw)


def _run_rows(cfg):
    with tempfile.TemporaryDirectory() as d:
        res = run_experiment(cfg, d)
    return [r for r in res.rows if r.case != "config"]


def _row(rows, case, metric):
    hit = [r for r in rows if r.case == case and r.metric == metric]
    assert len(hit) == 1, (case, metric)
    return hit[0]


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# --- criteria ---------------------------------------------------------------


def criterion_01():
    def work():
        b = build_basis("dirichlet_sine", 16, 128)
        gram = (b.table * b.weights) @ b.table.T
        ortho = float(np.max(np.abs(gram - np.eye(16))))
        hn = float(np.max(np.abs(h_norm_sq(b, np.eye(16)) - 1 / b.eigenvalues)))
        l3 = float(lp_norm_power(b, np.eye(16)[0], 3.0))
        l3_err = abs(l3 - 2**1.5 * 4 / (3 * np.pi))
        return ortho, hn, l3_err

    (ortho, hn, l3_err), el = _timed(work)
    ok = ortho <= 1e-10 and hn <= 1e-10 and l3_err <= 1e-6
    return _record(1, "spectral exactness", ok, el, 1.0, f"orthonormality {ortho:.1e}, H-norm {hn:.1e}, L3 cube {l3_err:.1e}")


def criterion_02():
    def work():
        errs = {}
        a = np.linspace(-10.0, 10.0, 801)
        A, B = np.meshgrid(a, a)
        m = A != B
        for r in (1.0, 1.5, 2.0, 3.0):
            pa, pb = np.abs(A) ** (r - 1) * A, np.abs(B) ** (r - 1) * B
            scan = np.min(((pa - pb) * (A - B))[m] / np.abs(A - B)[m] ** (r + 1))
            errs[r] = abs(scan - model.power_law_delta(r))
            errs[r] = max(errs[r], abs(scan - 2.0 ** (1 - r)))
        return errs

    errs, el = _timed(work)
    worst = max(errs.values())
    return _record(2, "monotonicity constant", worst <= 1e-6, el, 5.0, f"max |scan - 2^(1-r)| = {worst:.1e}")


def criterion_03():
    def work():
        cfg = _config("porous-default", ["check-conditions"])
        b, spec = cfg.build_basis(), cfg.build_model()
        c13 = model.check_condition_1_3(b, spec, 10_000, cfg.run["seed"])
        c14 = model.check_condition_1_4(b, spec, 10_000, cfg.run["seed"] + 1)
        return c13["min_slack"], c14["min_ratio"]

    (slack, ratio), el = _timed(work)
    ok = slack >= -1e-8 and ratio >= 1 - 1e-8
    return _record(3, "condition checkers", ok, el, 10.0, f"min slack {slack:.3e}, min ratio {ratio:.6f}")


def criterion_04():
    def work():
        b = build_basis("dirichlet_sine", 16, 128)
        worst = -np.inf
        for eps in (0.25, 0.4, 0.5):
            rng = np.random.default_rng(int(1000 * eps))
            z, x, y = (rng.standard_normal((10_000, 16)) * rng.exponential(1.0, (10_000, 1)) for _ in range(3))
            ax = coupling_drift(b, z - x, eps, 1.0)
            ay = coupling_drift(b, z - y, eps, 1.0)
            worst = max(worst, float(np.max(h_inner(b, ax - ay, x - y))))
        return worst

    worst, el = _timed(work)
    return _record(4, "coupling-drift dissipativity", worst <= 1e-12, el, 5.0, f"max pairing {worst:.3e}")


def criterion_05():
    rows, el = _timed(lambda: _run_rows(_config("porous-default", ["couple"])))
    frac = _row(rows, "coupled", "coalesced_fraction").value
    err = _row(rows, "skeleton", "relative_error").value
    ok = frac >= 0.95 and err <= 0.01 and all(r.passed is not False for r in rows)
    return _record(5, "coalescence", ok, el, 120.0, f"coalesced {frac:.3f} of 1000, skeleton tau rel err {err:.2e}")


def _girsanov_rows():
    porous = _run_rows(_config("porous-default", ["girsanov"]))
    linear = _run_rows(_config("linear-oracle", ["girsanov"]))
    return porous, linear


_GIRSANOV = {}
_GCASE = "F=exp_h_sq,s=100"


def _girsanov_cached():
    if not _GIRSANOV:
        (rows, el) = _timed(_girsanov_rows)
        _GIRSANOV["rows"], _GIRSANOV["elapsed"] = rows, el
    return _GIRSANOV["rows"], _GIRSANOV["elapsed"]


def criterion_06():
    (porous, linear), el = _girsanov_cached()
    zr2 = _row(porous, _GCASE, "z_mean_R").value
    z2 = _row(porous, _GCASE, "z_score").value
    zr1 = _row(linear, _GCASE, "z_mean_R").value
    z1 = _row(linear, _GCASE, "z_score").value
    ok = max(zr2, z2, zr1, z1) <= 3.0
    return _record(
        6, "Girsanov normalization and identity", ok, el, 180.0,
        f"r=2: |E R - 1|/SE {zr2:.2f}, z {z2:.2f}; r=1 vs closed form: |E R - 1|/SE {zr1:.2f}, z {z1:.2f}",
    )


def _quad_unit_constant(const, t=1.0):
    # c(theta, t) from its two time integrals, each by adaptive quadrature
    th, r = const.theta, const.r
    eps = (3 - r + th) / (4 + th)

    def weight(s):
        return np.exp(-eps * const.gamma.integral(s))

    i1, _ = integrate.quad(lambda s: np.sqrt(const.delta_sq(s) * const.xi_sq(s)) * weight(s), 0.0, t, epsabs=0, epsrel=1e-12)
    i2, _ = integrate.quad(lambda s: const.delta_sq(s) * const.xi_sq(s) * weight(s), 0.0, t, epsabs=0, epsrel=1e-12)
    pw = (6 + 2 * th) / (2 + th)
    return 2 * (4 + th) ** pw * i2 ** (th / (2 + th)) / ((3 - r + th) ** pw * i1**2)


def criterion_07():
    def work():
        cfg = _config("porous-default", ["harnack"], harnack={"alphas": [2.0, 4.0], "radii": [0.1, 0.25], "times": [0.5, 1.0]})
        rows = _run_rows(cfg)
        const = ModelSpec().constants(build_basis("dirichlet_sine", 16, 128))
        return rows, harnack.harnack_constant(const, 1.0), _quad_unit_constant(const)

    (rows, c1, quad), el = _timed(work)
    holds = [r for r in rows if r.metric == "holds"]
    jensen = [r for r in holds if "rho=0," in r.case]
    n_bad = sum(not r.value for r in holds)
    c_err = max(abs(c1 - quad), abs(c1 - 2 * 2.5 ** (8 / 3)))
    ok = n_bad == 0 and len(holds) == 2 * 2 * 3 * 2 and len(jensen) == 8 and c_err <= 1e-8
    return _record(
        7, "Harnack inequality", ok, el, 300.0,
        f"{len(holds) - n_bad}/{len(holds)} grid points hold (incl. {len(jensen)} x=y), c(1,1) = {c1:.10f} (err {c_err:.1e})",
    )


def criterion_08():
    (porous, linear), el = _girsanov_cached()
    checks = []
    for rows, case in ((porous, _GCASE), (linear, _GCASE)):
        m = _row(rows, case, "moment_R2")
        b = _row(rows, case, "moment_R2_bound")
        checks.append((m.value, m.se, b.value, b.passed))
    ok = all(p for *_, p in checks) and all(v <= bd * (1 + 3 * se / v) for v, se, bd, _ in checks)
    det = "; ".join(f"E R^2 {v:.3f} +- {se:.3f} vs bound {bd:.4g}" for v, se, bd, _ in checks)
    return _record(8, "moment bound", ok, el, 180.0, det + " (run shared with 06)")


def criterion_09():
    rows, el = _timed(lambda: _run_rows(_config("porous-default", ["feller"])))
    seq = [(_row(rows, f"rho={r:g}", "mean_abs_R_minus_1").value, _row(rows, f"rho={r:g}", "mean_abs_R_minus_1").se) for r in (0.5, 0.25, 0.125)]
    ok = all(b <= a + sb for (a, _), (b, sb) in zip(seq, seq[1:])) and _row(rows, "trend", "decreasing").value
    return _record(9, "strong Feller probe", bool(ok), el, 120.0, "E|R-1| = " + " > ".join(f"{m:.3f}" for m, _ in seq))


def criterion_10():
    def work():
        cfg = _config("porous-default", ["ergodics"])
        b, spec = cfg.build_basis(), cfg.build_model()
        run = cfg.path_config(T=1.0, dt=1e-4, taming=False)
        cc = ergodics.contraction_check(b, spec, b.unit_h_field(1), np.zeros(b.n_modes), run)
        lin = _config("linear-oracle", ["ergodics"])
        lb, ls = lin.build_basis(), lin.build_model()
        lc = ergodics.contraction_check(lb, ls, lb.unit_h_field(1), np.zeros(lb.n_modes), lin.path_config(T=0.5, dt=1e-5, taming=False))
        dev = float(np.max(np.abs(lc["trace"] / np.exp(-lb.eigenvalues[0] * lc["times"]) - 1.0)))
        return cc, lc, dev

    (cc, lc, dev), el = _timed(work)
    ok = cc["monotone"] and cc["envelope_ok"] and lc["monotone"] and lc["envelope_ok"] and dev <= 1e-3
    return _record(
        10, "synchronous contraction", ok, el, 60.0,
        f"r=2 max step increase {cc['max_increase']:.1e}, envelope ratio {cc['max_envelope_ratio']:.3f}; r=1 decay rel err {dev:.1e}",
    )


def criterion_11():
    def work():
        lin = _config("linear-oracle", ["ergodics"])
        lb, ls = lin.build_basis(), lin.build_model()
        o = lin.opts("ergodics")
        mu = ergodics.sample_invariant(lb, ls, lin.path_config(), 10_000, burn_in=o["burn_in"], thinning=o["thinning"], n_chains=o["n_chains"])
        z = mu.samples
        target = ls.q_values(lb.n_modes) ** 2 / (2 * lb.eigenvalues)
        s2 = z**2
        zs = np.abs(s2.mean(0) - target) / (s2.std(0, ddof=1) / np.sqrt(z.shape[0]))
        por = _config("porous-default", ["ergodics"])
        pb, ps = por.build_basis(), por.build_model()
        po = por.opts("ergodics")
        pmu = ergodics.sample_invariant(pb, ps, por.path_config(), po["n_samples"], burn_in=po["burn_in"], thinning=po["thinning"], n_chains=po["n_chains"])
        rep = ergodics.moment_report(pmu, ps, pb, po["eps0"])
        return zs, rep

    (zs, rep), el = _timed(work)
    drifts = {e: m["doubling_drift"] for e, m in rep["exp_moments"].items()}
    ok = bool(np.all(zs <= 3.0)) and all(d < 2.0 for d in drifts.values())
    det = f"r=1 variance z-scores {np.array2string(zs, precision=2)}; r=2 doubling drift " + ", ".join(f"eps0={e:g}: {d:.2f} SE" for e, d in drifts.items())
    return _record(11, "invariant measure", ok, el, 300.0, det)


def criterion_12():
    def work():
        cfg = _config("porous-default", ["ergodics"])
        b = build_basis("dirichlet_sine", 4)
        spec = cfg.build_model()
        const = spec.constants(b)
        run = cfg.path_config()
        mu = ergodics.sample_invariant(b, spec, run, 10_000, burn_in=1.0, thinning=0.5, n_chains=1000)
        bounds = []
        for rho in (0.0, 0.5, 1.0, 2.0):
            db = harnack.density_lp_bound(const, mu.samples, rho * b.unit_h_field(1), 1.0, 2.0, b)
            bounds.append((db["bound"], db["se"]))
        paths = simulate_paths(b, spec, np.zeros(4), run.with_(T=1.0), n_paths=4000, path_offset=10**9)
        pt = paths.x_T[~paths.failed]
        hist = [harnack.binned_density_norm(pt, mu.samples, 2.0, mode=m) for m in (0, 1)]
        return bounds, hist

    (bounds, hist), el = _timed(work)
    finite = all(np.isfinite(v) for v, _ in bounds)
    mono = all(b2 + 3 * s2 >= b1 for (b1, _), (b2, s2) in zip(bounds, bounds[1:]))
    respects = all(h <= bounds[0][0] for h in hist)
    ok = finite and mono and respects
    det = "bounds " + ", ".join(f"{v:.4g}" for v, _ in bounds) + f"; histogram norms {hist[0]:.4f}, {hist[1]:.4f}"
    return _record(12, "density bound", ok, el, 180.0, det)


def criterion_13():
    def work():
        cfg = _config("porous-default", ["ergodics"])
        o = cfg.opts("ergodics")
        b = build_basis("dirichlet_sine", o["ultra_n_modes"])
        spec = cfg.build_model()
        mu = ergodics.sample_invariant(b, spec, cfg.path_config(), 4 * o["ultra_n_paths"], burn_in=1.0, thinning=0.5, n_chains=2 * o["ultra_n_paths"])
        log_f = ergodics.exp_h_test_function(b, spec, o["ultra_eps0"], mu.samples)
        xg = [a * b.unit_h_field(1) for a in o["ultra_x_norms"]]
        tg = np.geomspace(o["ultra_t_min"], o["ultra_t_max"], o["ultra_n_times"])
        return ergodics.ultracontractivity_probe(b, spec, log_f, tg, xg, cfg.path_config(dt=o["ultra_dt"]), n_paths=o["ultra_n_paths"])

    res, el = _timed(work)
    fit = res["fit"]
    ok = fit["ok"] and 2.0 <= fit["exponent"] <= 4.0
    det = f"fitted exponent {fit.get('exponent', float('nan')):.3f} (theory {res['theory_exponent']:g})"
    return _record(13, "ultracontractivity shape", ok, el, 300.0, det)


def criterion_14():
    def work():
        same = True
        with tempfile.TemporaryDirectory() as d:
            for name in ("porous-default", "hermite-ou", "linear-oracle"):
                raw = load_config(name)
                raw["suites"] = ["constants", "simulate", "couple", "girsanov"]
                raw["run"].update(T=0.6, n_paths=40, chunk_size=16)
                raw["suite"] = {"couple": {"n_paths": 40, "min_coalesced": 0.0}}
                outs = []
                for k, workers in enumerate((1, 1, 3)):
                    raw["run"]["workers"] = workers
                    res = run_experiment(validate_config(raw), f"{d}/{name}-{k}")
                    outs.append({p.name: p.read_bytes() for p in res.files})
                same &= outs[0] == outs[1] == outs[2]
        return same

    same, el = _timed(work)
    return _record(14, "determinism", same, el, 60.0, "byte-identical CSV and JSON across repeats and worker counts" if same else "reports differ")


CRITERIA = [globals()[f"criterion_{i:02d}"] for i in range(1, 15)]


@pytest.mark.slow
@pytest.mark.parametrize("n", range(1, 15), ids=lambda n: f"criterion_{n:02d}")
def test_acceptance(n):
    ok, line = CRITERIA[n - 1]()
    assert ok, line


if __name__ == "__main__":
    results = [c()[0] for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria pass")
    sys.exit(0 if all(results) else 1)
