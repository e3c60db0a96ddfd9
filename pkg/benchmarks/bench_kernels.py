"""Time the numpy and numba kernel backends on path-batch sized inputs,
plus one end-to-end batch of the integrator under each backend.

    python benchmarks/bench_kernels.py [--paths 2048] [--modes 16] [--repeat 5]

The end-to-end timings run in subprocesses because the backend is fixed at
import time by POROUS_HARNACK_PURE_NUMPY.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from porous_harnack.kernels import implementation

E2E = """
import time
import numpy as np
from porous_harnack import ModelSpec, PathConfig, build_basis, simulate_paths, kernels
b = build_basis("dirichlet_sine", {modes})
cfg = PathConfig(T=0.01, dt=1e-4, seed=1, chunk_size={paths})
simulate_paths(b, ModelSpec(), np.zeros({modes}), cfg.with_(T=2e-4), n_paths=8)
t0 = time.perf_counter()
simulate_paths(b, ModelSpec(), np.zeros({modes}), cfg, n_paths={paths})
print(kernels.BACKEND, time.perf_counter() - t0)
"""


def bench(fn, repeat):
    fn()  # warm-up (jit compile)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases(mod, n_paths, n_modes, n_quad):
    rng = np.random.default_rng(0)
    ids = np.arange(n_paths, dtype=np.uint64)
    grid = rng.standard_normal((n_paths, n_quad))
    w = np.full(n_quad, 1.0 / n_quad)
    state = rng.standard_normal((n_paths, n_modes))
    drift = rng.standard_normal((n_paths, n_modes))
    inv_lam = 1.0 / (np.pi * np.arange(1, n_modes + 1)) ** 2
    q = np.ones(n_modes)
    return {
        "gaussian_block": lambda: mod.gaussian_block(7, ids, 3, 0, n_modes),
        "power_law r=2": lambda: mod.power_law(grid, 2.0, 1.0),
        "power_law r=1.5": lambda: mod.power_law(grid, 1.5, 1.0),
        "tamed_update": lambda: mod.tamed_update(state, drift, inv_lam, 1e-4, True, q, drift),
        "lp_power p=3": lambda: mod.lp_power(grid, w, 3.0),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=2048)
    ap.add_argument("--modes", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    n_quad = 8 * args.modes

    res = {}
    for name in ("numpy", "numba"):
        cases = kernel_cases(implementation(name), args.paths, args.modes, n_quad)
        res[name] = {k: bench(f, args.repeat) for k, f in cases.items()}
    print(f"kernels: {args.paths} paths, {args.modes} modes, {n_quad} grid points (best of {args.repeat})")
    print(f"{'kernel':<18}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for k in res["numpy"]:
        a, b = res["numpy"][k] * 1e3, res["numba"][k] * 1e3
        print(f"{k:<18}{a:>10.3f}{b:>10.3f}{a / b:>9.2f}")

    print(f"\nend to end: {args.paths} paths x 100 steps, r=2")
    code = E2E.format(modes=args.modes, paths=args.paths)
    for flag in ("1", "0"):
        env = dict(os.environ, POROUS_HARNACK_PURE_NUMPY=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"{backend:<18}{float(secs):>10.3f} s")


if __name__ == "__main__":
    main()
