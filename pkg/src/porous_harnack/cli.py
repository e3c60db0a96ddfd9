"""Command-line entry point: ``porous-harnack run <config>`` or one suite at a time."""

import argparse
import sys

from .experiments import SUITES, ConfigError, load_config, run_experiment, shipped_configs, validate_config


def _common(p):
    p.add_argument("--seed", type=int, help="override run.seed")
    p.add_argument("--out-dir", help="report directory (default: output.dir of the config)")
    p.add_argument("--paths", type=int, help="override run.n_paths and every per-suite n_paths")
    p.add_argument("--dt", type=float, help="override run.dt")
    p.add_argument("--workers", type=int, help="worker threads for path batches")
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")


def build_parser():
    ap = argparse.ArgumentParser(prog="porous-harnack", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run every suite listed in a config file")
    p.add_argument("config", help=f"TOML path or shipped config name {shipped_configs()}")
    _common(p)
    for s in SUITES:
        p = sub.add_parser(s, help=f"run only the {s} suite")
        p.add_argument("--config", default="porous-default", help="TOML path or shipped config name")
        _common(p)
    sub.add_parser("configs", help="list shipped configs")
    return ap


def _apply_overrides(raw, args, suites=None):
    raw = dict(raw)
    run = dict(raw.get("run", {}))
    if args.seed is not None:
        run["seed"] = args.seed
    if args.dt is not None:
        run["dt"] = args.dt
    if args.workers is not None:
        run["workers"] = args.workers
    if args.paths is not None:
        run["n_paths"] = args.paths
        raw["suite"] = {k: {**v, "n_paths": args.paths} if "n_paths" in v else v for k, v in raw.get("suite", {}).items()}
    raw["run"] = run
    if suites is not None:
        raw["suites"] = suites
    return raw


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "configs":
        print("\n".join(shipped_configs()))
        return 0
    log = None if args.quiet else (lambda m: print(m, file=sys.stderr))
    try:
        if args.command == "run":
            raw = _apply_overrides(load_config(args.config), args)
        else:
            raw = _apply_overrides(load_config(args.config), args, [args.command])
        cfg = validate_config(raw)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    res = run_experiment(cfg, out_dir=args.out_dir, log=log)
    if log:
        for f in res.files:
            log(f"wrote {f}")
        log("PASS" if res.passed else "FAIL")
    return res.exit_status


if __name__ == "__main__":
    sys.exit(main())
