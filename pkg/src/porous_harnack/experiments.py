"""Declarative experiment runner and deterministic reports.

A config is a nested TOML table with blocks ``basis``, ``model``, ``run``,
an ordered ``suites`` list, optional per-suite overrides under
``suite.<name>`` and an ``output`` block. Every suite emits rows
``(suite, case, metric, value, se, passed, seed)``; rows with
``passed = false`` make the run fail.
"""

import csv
import json
import math
import re
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import ergodics, harnack, model
from .integrator import PathConfig, coupled_simulate, simulate_paths
from .spectral import BasisError, SpectralMap, build_basis, h_norm, hs_summability_report

SCHEMA_VERSION = 1
SUITES = ("simulate", "couple", "harnack", "girsanov", "feller", "ergodics", "constants", "check-conditions")
COLUMNS = ("schema_version", "suite", "case", "metric", "value", "se", "passed", "seed")
MAX_OVERFLOW_RATE = 0.01

# per-suite defaults; anything here can be overridden under [suite.<name>]
SUITE_DEFAULTS = {
    "constants": {"times": [0.5, 1.0, 2.0]},
    "check-conditions": {"n_samples": 10_000, "variational_samples": 1000},
    "simulate": {},
    "couple": {"radius": 0.25, "min_coalesced": 0.95, "holder_margin": 0.10, "skeleton_beta": 5.0},
    "girsanov": {"radius": 0.25, "f_scale": 100.0},
    "harnack": {"alphas": [2.0, 4.0], "radii": [0.1, 0.25], "times": [0.5, 1.0]},
    "feller": {"radii": [0.5, 0.25, 0.125]},
    "ergodics": {
        "n_samples": 10_000,
        "n_chains": 1000,
        "burn_in": 1.0,
        "thinning": 0.5,
        "eps0": [0.01, 0.05],
        "contraction_dt": 1e-4,
        "contraction_T": 1.0,
        "density_alpha": 2.0,
        "density_t": 1.0,
        "density_radii": [0.0, 0.5, 1.0, 2.0],
        "density_n_paths": 4000,
        "ultra_n_modes": 4,
        "ultra_dt": 1e-6,
        "ultra_eps0": 1.0,
        "ultra_x_norms": [10.0, 30.0, 100.0, 200.0],
        "ultra_t_min": 0.01,
        "ultra_t_max": 0.1,
        "ultra_n_times": 8,
        "ultra_n_paths": 100,
    },
}


class ConfigError(ValueError):
    """Invalid experiment config; the message starts with the offending field."""


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    suites: tuple
    basis: dict
    model: dict
    run: dict
    suite: dict
    output: dict

    def resolved(self):
        """Config as echoed into reports; the worker count is left out since
        results do not depend on it."""
        d = asdict(self)
        d["suites"] = list(self.suites)
        d["run"].pop("workers", None)
        return d

    def build_basis(self):
        b = self.basis
        return build_basis(b["kind"], b["n_modes"], b.get("n_quad"), SpectralMap(**b.get("spectral_map", {})))

    def build_model(self):
        m = dict(self.model)
        q = m.pop("q", 1.0)
        if isinstance(q, dict):
            scale, expo = float(q.get("scale", 1.0)), float(q.get("exponent", 0.0))
            q = lambda i: scale * i**expo  # noqa: E731
        return model.ModelSpec(q=q, **m)

    def path_config(self, **kw):
        r = {k: v for k, v in self.run.items() if k != "n_paths"}
        r.update(kw)
        return PathConfig(**r)

    def opts(self, name):
        out = dict(SUITE_DEFAULTS.get(name, {}))
        out.update(self.suite.get(name, {}))
        out.setdefault("n_paths", self.run["n_paths"])
        return out


_RUN_KEYS = {"T", "dt", "seed", "n_paths", "taming", "tol_coal", "beta_safety", "workers", "chunk_size"}
_MODEL_KEYS = {"r", "theta", "psi_scale", "phi_coef", "q"}


def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def validate_config(raw):
    """Check a raw config mapping and return an :class:`ExperimentConfig`.

    Fields are checked in order (suites, basis, model, run, suite
    overrides); the first violation raises :class:`ConfigError`.
    """
    if not isinstance(raw, dict):
        _fail("config", "must be a table")
    suites = raw.get("suites")
    if not isinstance(suites, (list, tuple)) or len(suites) == 0:
        _fail("suites", "must be a nonempty list")
    for s in suites:
        if s not in SUITES:
            _fail("suites", f"unknown suite {s!r}; expected one of {SUITES}")
    basis = dict(raw.get("basis", {}))
    for key in ("kind", "n_modes"):
        if key not in basis:
            _fail(f"basis.{key}", "missing")
    if not isinstance(basis["n_modes"], int) or basis["n_modes"] < 1:
        _fail("basis.n_modes", "must be an integer >= 1")
    try:
        SpectralMap(**basis.get("spectral_map", {}))
    except (BasisError, TypeError) as exc:
        _fail("basis.spectral_map", str(exc))
    mdl = dict(raw.get("model", {}))
    extra = set(mdl) - _MODEL_KEYS
    if extra:
        _fail(f"model.{sorted(extra)[0]}", "unknown key")
    run = dict(raw.get("run", {}))
    extra = set(run) - _RUN_KEYS
    if extra:
        _fail(f"run.{sorted(extra)[0]}", "unknown key")
    run.setdefault("n_paths", 10_000)
    if not isinstance(run["n_paths"], int) or run["n_paths"] < 2:
        _fail("run.n_paths", "must be an integer >= 2")
    suite = {k: dict(v) for k, v in raw.get("suite", {}).items()}
    for k in suite:
        if k not in SUITES:
            _fail(f"suite.{k}", "unknown suite")
    cfg = ExperimentConfig(
        name=str(raw.get("name", "experiment")),
        suites=tuple(suites),
        basis=basis,
        model=mdl,
        run=run,
        suite=suite,
        output=dict(raw.get("output", {})),
    )
    try:
        basis_obj = cfg.build_basis()
    except BasisError as exc:
        _fail("basis", str(exc))
    try:
        spec = cfg.build_model()
        spec.q_values(basis_obj.n_modes)
    except (model.ModelError, TypeError) as exc:
        _fail("model", str(exc))
    try:
        cfg.path_config()
    except (ValueError, TypeError) as exc:
        _fail("run", str(exc))
    return cfg


def shipped_configs():
    return sorted(p.name[:-5] for p in resources.files(__package__).joinpath("configs").iterdir() if p.name.endswith(".toml"))


def load_config(name_or_path):
    """Load a shipped config by name or a TOML file by path (unvalidated)."""
    p = Path(name_or_path)
    if p.suffix == ".toml" and p.exists():
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    res = resources.files(__package__).joinpath("configs", f"{name_or_path}.toml")
    if not res.is_file():
        raise ConfigError(f"config: no file {name_or_path!r} and no shipped config of that name ({shipped_configs()})")
    return tomllib.loads(res.read_text())


# --- reports -----------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    suite: str
    case: str
    metric: str
    value: Any
    se: Optional[float] = None
    passed: Optional[bool] = None
    seed: int = 0
    schema_version: int = SCHEMA_VERSION

    def cells(self):
        return [_fmt(getattr(self, c)) for c in COLUMNS]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


_INT_RE = re.compile(r"^[+-]?\d+$")


def _parse(s):
    if s == "":
        return None
    if s in ("true", "false"):
        return s == "true"
    if _INT_RE.match(s):
        return int(s)
    try:
        return float(s)
    except ValueError:
        return s


def _json_value(v):
    if isinstance(v, (float, np.floating)) and not math.isfinite(v):
        return format(float(v), ".17g")
    if isinstance(v, np.generic):
        return v.item()
    return v


def emit_report(rows, out_dir, fmt="both", config=None):
    """Write ``<suite>.csv`` per suite and ``summary.json``.

    Floats are rendered with 17 significant digits so values survive a
    round trip exactly. Returns the written paths.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("emit_report needs at least one row")
    if fmt not in ("csv", "json", "both"):
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    by_suite = {}
    for r in rows:
        by_suite.setdefault(r.suite, []).append(r)
    if fmt in ("csv", "both"):
        for suite, rs in by_suite.items():
            path = out / f"{suite}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(COLUMNS)
                for r in rs:
                    w.writerow(r.cells())
            written.append(path)
    if fmt in ("json", "both"):
        summary = {
            "schema_version": SCHEMA_VERSION,
            "config": config,
            "passed": all(r.passed is not False for r in rows),
            "suites": {
                s: {
                    "passed": all(r.passed is not False for r in rs),
                    "rows": [{c: _json_value(getattr(r, c)) for c in COLUMNS} for r in rs],
                }
                for s, rs in by_suite.items()
            },
        }
        path = out / "summary.json"
        path.write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
        written.append(path)
    return written


def read_report(path):
    """Parse a CSV written by :func:`emit_report` back into rows."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if tuple(header) != COLUMNS:
            raise ValueError(f"{path}: unexpected columns {header}")
        rows = []
        for cells in rd:
            d = {c: _parse(v) for c, v in zip(COLUMNS, cells)}
            d["suite"], d["case"], d["metric"] = cells[1], cells[2], cells[3]
            rows.append(ReportRow(**d))
    return rows


# --- suites ------------------------------------------------------------------


class _Rows:
    def __init__(self, suite, seed):
        self.suite, self.seed, self.rows = suite, seed, []

    def add(self, case, metric, value, se=None, passed=None):
        if passed is not None:
            passed = bool(passed)
        self.rows.append(ReportRow(self.suite, case, metric, value, se, passed, self.seed))


def _flatten(d, prefix=""):
    for k in sorted(d):
        v = d[k]
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        elif isinstance(v, (list, tuple)):
            yield key, json.dumps(list(v))
        else:
            yield key, v


def _echo(out, cfg):
    for k, v in _flatten(cfg.resolved()):
        out.add("config", k, v)


def _suite_constants(cfg, basis, spec, out):
    const = spec.constants(basis)
    o = cfg.opts("constants")
    out.add("structural", "eps", const.eps)
    out.add("structural", "delta_sq", const.delta_sq(0.0))
    out.add("structural", "xi_sq", const.xi_sq(0.0))
    out.add("structural", "gamma", const.gamma(0.0))
    out.add("structural", "lambda_1", const.lambda_1)
    hs = hs_summability_report(basis, spec.q_values(basis.n_modes))
    out.add("hilbert_schmidt", "partial_sum", hs["partial_sum"])
    out.add("hilbert_schmidt", "tail_ratio", hs["tail_ratio"])
    for t in o["times"]:
        c = harnack.harnack_constant(const, t)
        out.add(f"t={t:g}", "c_theta_t", c)
        if const.stationary:
            st = harnack.harnack_constant_stationary(const, t)
            out.add(f"t={t:g}", "c_theta", st["c_theta"])
            out.add(f"t={t:g}", "stationary_agreement", abs(st["c_t"] / c - 1.0), passed=abs(st["c_t"] / c - 1.0) < 1e-10)


def _suite_check_conditions(cfg, basis, spec, out):
    o = cfg.opts("check-conditions")
    seed = cfg.run["seed"]
    c13 = model.check_condition_1_3(basis, spec, o["n_samples"], seed)
    out.add("monotonicity", "min_slack", c13["min_slack"], passed=c13["min_slack"] >= -1e-8)
    out.add("monotonicity", "n_violations", c13["n_violations"])
    c14 = model.check_condition_1_4(basis, spec, o["n_samples"], seed + 1)
    out.add("intrinsic_norm", "xi_squared", c14["xi_squared_used"])
    out.add("intrinsic_norm", "min_ratio", c14["min_ratio"], passed=c14["min_ratio"] >= 1 - 1e-8)
    var = model.check_variational_conditions(basis, spec, o["variational_samples"], seed + 2)
    out.add("growth", "min_slack", var["growth"]["min_slack"], passed=var["growth"]["ok"])
    out.add("A1", "modulus_ratio", var["A1"]["moduli"][2] / max(var["A1"]["moduli"][1], 1e-300), passed=var["A1"]["ok"])
    out.add("A2", "min_slack", var["A2"]["min_slack"], passed=var["A2"]["ok"])
    out.add("A3", "min_slack", var["A3"]["min_slack"], passed=var["A3"]["ok"])
    out.add("A3", "f_floor", var["A3"]["f_floor"])
    out.add("A4", "C_hat", var["A4"]["C_hat"], passed=var["A4"]["ok"])


def _overflow_row(out, case, n_failed, n):
    out.add(case, "overflow_rate", n_failed / n, passed=n_failed <= MAX_OVERFLOW_RATE * n)


def _suite_simulate(cfg, basis, spec, out):
    o = cfg.opts("simulate")
    n = o["n_paths"]
    run = cfg.path_config(T=o.get("T", cfg.run["T"]))
    x0 = np.zeros(basis.n_modes)
    res = simulate_paths(basis, spec, x0, run, n_paths=n, record_energy=True)
    _overflow_row(out, "from_zero", res.n_failed, n)
    ok = res.x_T[~res.failed]
    out.add("from_zero", "final_energy_h", float(res.energy_h[-1]))
    out.add("from_zero", "final_energy_lr", float(res.energy_lr[-1]))
    out.add("from_zero", "time_avg_energy_lr", float(res.energy_lr.mean()), passed=np.all(np.isfinite(res.energy_lr)))
    if spec.linear_psi and spec.phi is None:
        _, var = harnack.ou_transition(basis, spec, x0, run.T)
        for i in range(basis.n_modes):
            s2 = ok[:, i] ** 2
            m, se = s2.mean(), s2.std(ddof=1) / np.sqrt(s2.shape[0])
            z = abs(m - var[i]) / se
            out.add(f"mode_{i + 1}", "second_moment", float(m), float(se))
            out.add(f"mode_{i + 1}", "closed_form", float(var[i]))
            out.add(f"mode_{i + 1}", "z_score", float(z), passed=z <= 3.0)


def _suite_couple(cfg, basis, spec, out):
    o = cfg.opts("couple")
    run = cfg.path_config()
    x = np.zeros(basis.n_modes)
    y = o["radius"] * basis.unit_h_field(1)
    cp = coupled_simulate(basis, spec, x, y, run, n_paths=o["n_paths"])
    ok = cp.ok()
    _overflow_row(out, "coupled", int((~ok).sum()), o["n_paths"])
    frac = float(cp.coalesced[ok].mean())
    out.add("coupled", "coalesced_fraction", frac, passed=frac >= o["min_coalesced"])
    if cp.coalesced.any():
        out.add("coupled", "mean_tau", float(np.nanmean(cp.tau[cp.coalesced])))
        ratio = float(np.max(cp.holder_sum[cp.coalesced]) / harnack.holder_budget(cp.beta, run.beta_safety))
        out.add("coupled", "holder_max_ratio", ratio, passed=ratio <= 1.0 + o["holder_margin"])
    out.add("coupled", "beta_c", cp.beta.c)
    out.add("coupled", "coalescence_integral", cp.beta.coalescence_integral())
    out.add("coupled", "coalescence_target", cp.beta.coalescence_target())
    # deterministic skeleton: no noise, no drift, constant beta
    beta = o["skeleton_beta"]
    skel_spec = model.ModelSpec(r=spec.r, theta=spec.theta, psi_scale=0.0, phi_coef=0.0, q=1.0)
    sk = coupled_simulate(
        basis, skel_spec, x, basis.unit_h_field(1), cfg.path_config(noise=False, beta_safety=1.0), n_paths=1, beta=beta
    )
    pred = 1.0 / (spec.eps * beta)
    tau = float(sk.tau[0])
    err = abs(tau / pred - 1.0) if np.isfinite(tau) else float("inf")
    out.add("skeleton", "tau", tau)
    out.add("skeleton", "predicted_tau", pred)
    out.add("skeleton", "relative_error", err, passed=err <= 0.01)


def _suite_girsanov(cfg, basis, spec, out):
    o = cfg.opts("girsanov")
    run = cfg.path_config()
    x = np.zeros(basis.n_modes)
    y = o["radius"] * basis.unit_h_field(1)
    # exp(-s ||z||_H^2) with s large enough that F varies across paths at T;
    # the linear model has it in closed form
    s = float(o["f_scale"])
    F = lambda z: np.exp(-s * harnack.h_norm_sq(basis, z))  # noqa: E731
    direct = harnack.ou_expect_exp_h_sq(basis, spec, y, run.T, s) if spec.linear_psi and spec.phi is None else None
    res = harnack.girsanov_consistency(basis, spec, x, y, F, run.T, o["n_paths"], run, direct_value=direct)
    case = f"F=exp_h_sq,s={s:g}"
    out.add(case, "mean_R", res["mean_R"], res["mean_R_se"])
    out.add(case, "z_mean_R", res["z_R"], passed=res["z_R"] <= 3.0)
    out.add(case, "reweighted", res["reweighted"], res["reweighted_se"])
    out.add(case, "direct", res["direct"], res["direct_se"])
    out.add(case, "z_score", res["z_score"], passed=res["z_score"] <= 3.0)
    out.add(case, "ess", res["ess"], passed=not res["flagged"])
    out.add(case, "moment_R2", res["moment"], res["moment_se"])
    out.add(case, "moment_R2_bound", res["moment_bound"], passed=res["moment_ok"])
    out.add(case, "coalesced_fraction", res["coalesced_fraction"])


def _suite_harnack(cfg, basis, spec, out):
    o = cfg.opts("harnack")
    x = np.zeros(basis.n_modes)
    radii = [0.0] + [float(r) for r in o["radii"]]
    ys = [x + r * basis.unit_h_field(1) for r in radii]
    reps = harnack.harnack_sweep(basis, spec, x, ys, o["times"], o["alphas"], None, o["n_paths"], cfg.path_config())
    const = spec.constants(basis)
    for t in o["times"]:
        out.add(f"t={t:g}", "c_theta_t", harnack.harnack_constant(const, t))
    for rep in reps:
        case = f"alpha={rep.alpha:g},F={rep.functional},rho={rep.dist:.6g},t={rep.t:g}"
        out.add(case, "lhs", rep.lhs, rep.se_lhs)
        out.add(case, "rhs", rep.rhs, rep.se_rhs)
        out.add(case, "holds", rep.holds, passed=rep.holds)


def _suite_feller(cfg, basis, spec, out):
    o = cfg.opts("feller")
    x = np.zeros(basis.n_modes)
    res = harnack.strong_feller_probe(basis, spec, x, o["radii"], cfg.run["T"], o["n_paths"], cfg.path_config())
    for row in res["rows"]:
        case = f"rho={row['radius']:g}"
        out.add(case, "mean_abs_R_minus_1", row["mean_abs_r_minus_1"], row["se"])
        out.add(case, "envelope", row["envelope"], passed=row["below_envelope"])
        out.add(case, "coalesced_fraction", row["coalesced_fraction"])
    out.add("trend", "decreasing", res["decreasing"], passed=res["decreasing"])


def _suite_ergodics(cfg, basis, spec, out):
    o = cfg.opts("ergodics")
    seed = cfg.run["seed"]
    run = cfg.path_config(dt=o.get("dt", cfg.run["dt"]))
    kw = dict(burn_in=o["burn_in"], thinning=o["thinning"], n_chains=o["n_chains"])
    mu = ergodics.sample_invariant(basis, spec, run, o["n_samples"], **kw)
    z = mu.samples
    const = spec.constants(basis)
    out.add("invariant", "n_samples", len(mu))
    if spec.linear_psi and spec.phi is None:
        k = basis.eigenvalues * spec.psi_scale(0.0) - spec.phi_coef(0.0)
        q = spec.q_values(basis.n_modes)
        for i in range(basis.n_modes):
            s2 = z[:, i] ** 2
            m, se = s2.mean(), s2.std(ddof=1) / np.sqrt(s2.shape[0])
            target = q[i] ** 2 / (2 * k[i])
            out.add(f"mode_{i + 1}", "variance", float(m), float(se))
            out.add(f"mode_{i + 1}", "closed_form", float(target))
            out.add(f"mode_{i + 1}", "z_score", float(abs(m - target) / se), passed=abs(m - target) <= 3 * se)
            mz = abs(z[:, i].mean()) / (z[:, i].std(ddof=1) / np.sqrt(z.shape[0]))
            out.add(f"mode_{i + 1}", "mean_z_score", float(mz), passed=mz <= 3.0)
    else:
        mu2 = ergodics.sample_invariant(basis, spec, run.with_(seed=(seed + 1) % 2**64), o["n_samples"], **kw)
        a, b = h_norm(basis, z) ** 2, h_norm(basis, mu2.samples) ** 2
        sa, sb = a.std(ddof=1) / np.sqrt(a.size), b.std(ddof=1) / np.sqrt(b.size)
        zz = abs(a.mean() - b.mean()) / np.hypot(sa, sb)
        out.add("cross_seed", "h_sq_moment_a", float(a.mean()), float(sa))
        out.add("cross_seed", "h_sq_moment_b", float(b.mean()), float(sb))
        out.add("cross_seed", "z_score", float(zz), passed=zz <= 3.0)
    mr = ergodics.moment_report(z, spec, basis, o["eps0"])
    out.add("moments", "lr_moment", mr["lr_moment"], mr["lr_moment_se"])
    for e0, m in mr["exp_moments"].items():
        out.add(f"eps0={e0:g}", "exp_moment", m["mean"], m["se"])
        out.add(f"eps0={e0:g}", "doubling_drift", m["doubling_drift"], passed=m["stable"])

    # synchronous contraction, untamed
    if max(const.gamma.values) <= 0:
        crun = cfg.path_config(dt=o["contraction_dt"], T=o["contraction_T"], taming=False)
        x = basis.unit_h_field(1)
        cc = ergodics.contraction_check(basis, spec, x, np.zeros(basis.n_modes), crun)
        out.add("contraction", "final_distance", float(cc["trace"][-1]))
        out.add("contraction", "max_step_increase", cc["max_increase"], passed=cc["monotone"])
        out.add("contraction", "max_envelope_ratio", cc["max_envelope_ratio"], passed=cc["envelope_ok"])
        if spec.r == 1.0:
            dev = float(np.max(np.abs(cc["trace"] / np.exp(-const.lambda_1 * cc["times"]) - 1.0)))
            out.add("contraction", "linear_decay_rel_error", dev, passed=dev <= 1e-3)

    # density bound along e_1 and coarse histogram check from the origin
    alpha, t = o["density_alpha"], o["density_t"]
    bounds, ses = [], []
    for rho in o["density_radii"]:
        xr = rho * basis.unit_h_field(1)
        db = harnack.density_lp_bound(const, z, xr, t, alpha, basis)
        bounds.append(db["bound"])
        ses.append(db["se"] if np.isfinite(db["se"]) else 0.0)
        out.add(f"rho={rho:g}", "density_bound", db["bound"], db["se"], passed=np.isfinite(db["bound"]))
    # non-decreasing along the ray up to 3 SE (flat near the centre of mu)
    mono = all(b2 + 3 * s2 >= b1 for b1, b2, s2 in zip(bounds, bounds[1:], ses[1:]))
    out.add("density", "monotone_in_distance", mono, passed=mono)
    paths = simulate_paths(basis, spec, np.zeros(basis.n_modes), cfg.path_config(T=t), n_paths=o["density_n_paths"], path_offset=10**9)
    pt = paths.x_T[~paths.failed]
    for mode in range(min(2, basis.n_modes)):
        hist = harnack.binned_density_norm(pt, z, alpha, mode=mode)
        out.add(f"histogram_mode_{mode + 1}", "binned_norm", hist, passed=hist <= bounds[0])

    if spec.r > 1:
        _ultracontractivity(cfg, basis, spec, o, out)


def _ultracontractivity(cfg, basis, spec, o, out):
    b = build_basis(basis.kind, o["ultra_n_modes"], spectral_map=basis.spectral_map)
    run = cfg.path_config(dt=o["ultra_dt"])
    mu = ergodics.sample_invariant(b, spec, cfg.path_config(), 4 * o["ultra_n_paths"], burn_in=1.0, thinning=0.5, n_chains=2 * o["ultra_n_paths"])
    log_f = ergodics.exp_h_test_function(b, spec, o["ultra_eps0"], mu.samples)
    xg = [a * b.unit_h_field(1) for a in o["ultra_x_norms"]]
    tg = np.geomspace(o["ultra_t_min"], o["ultra_t_max"], o["ultra_n_times"])
    res = ergodics.ultracontractivity_probe(b, spec, log_f, tg, xg, run, n_paths=o["ultra_n_paths"])
    for t, s in zip(res["t_grid"], res["sup"]):
        out.add(f"t={t:.6g}", "log_sup_Ptf_sq", float(s))
    fit = res["fit"]
    if fit["ok"]:
        lo, hi = 2.0, 4.0
        out.add("fit", "exponent", fit["exponent"], fit["exponent_se"], passed=lo <= fit["exponent"] <= hi)
        out.add("fit", "theory_exponent", res["theory_exponent"])
        out.add("fit", "max_abs_residual", fit["max_abs_residual"])
    else:
        out.add("fit", "exponent", float("nan"), passed=False)
    out.add("cross_check", "c_hat", res["cross_check"]["c_hat"])


_DISPATCH = {
    "constants": _suite_constants,
    "check-conditions": _suite_check_conditions,
    "simulate": _suite_simulate,
    "couple": _suite_couple,
    "girsanov": _suite_girsanov,
    "harnack": _suite_harnack,
    "feller": _suite_feller,
    "ergodics": _suite_ergodics,
}


@dataclass
class RunResult:
    rows: list
    files: list
    timings: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(r.passed is not False for r in self.rows)

    @property
    def exit_status(self):
        return 0 if self.passed else 1


def run_experiment(config, out_dir=None, log=None):
    """Validate ``config`` (mapping or :class:`ExperimentConfig`), run the
    selected suites in order and write the reports.

    Wall-clock timings go to ``timings.json`` only, so CSV and summary files
    are byte-identical across repeated runs with the same seed.
    """
    cfg = config if isinstance(config, ExperimentConfig) else validate_config(config)
    out_dir = Path(out_dir or cfg.output.get("dir", f"results/{cfg.name}"))
    basis = cfg.build_basis()
    spec = cfg.build_model()
    rows, timings = [], {}
    for suite in cfg.suites:
        out = _Rows(suite, cfg.run["seed"])
        _echo(out, cfg)
        t0 = time.perf_counter()
        _DISPATCH[suite](cfg, basis, spec, out)
        timings[suite] = time.perf_counter() - t0
        rows.extend(out.rows)
        if log:
            bad = [r for r in out.rows if r.passed is False]
            log(f"{suite}: {'FAIL' if bad else 'ok'} ({timings[suite]:.1f} s)")
            for r in bad:
                log(f"  failed {r.case} {r.metric} = {_fmt(r.value)}")
    files = emit_report(rows, out_dir, config=cfg.resolved())
    (out_dir / "timings.json").write_text(json.dumps(timings, indent=1, sort_keys=True) + "\n")
    return RunResult(rows, files, timings)
