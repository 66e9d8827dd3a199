"""Command-line entry point.

    lfi run   --config FILE [--seed N] [--out DIR]
    lfi bench --config FILE [--out DIR]
    lfi diag  --run DIR [--out DIR] [--resolution N]
    lfi list

Configs are JSON objects. Exit status is 0 on success, 1 for a bad
configuration and 2 when a run fails.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import bench
from .errors import ConfigError, LfiError
from .results import read_particles
from .sim import GENERATORS, make_generator

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("lfi")


def cmd_run(args):
    doc = bench.load_json(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out is not None:
        doc["out"] = args.out
    cfg = bench.ExperimentConfig.from_dict(doc)
    if cfg.out is None:
        cfg.out = f"runs/{cfg.generator}-{cfg.algorithm}-seed{cfg.seed}"
    cfg.validate()
    _, summary = bench.run_experiment(cfg)
    perf = summary["performance"]
    for rec in summary["replications"]:
        print(f"replication {rec['replication']}: theta_hat={np.round(rec['theta_hat'], 4).tolist()}"
              f" performance={rec['performance']:.4f}")
    if perf["n"]:
        print(f"{cfg.algorithm} on {cfg.generator}: {perf['mean']:.3f} ± {perf['sd']:.3f}"
              f" over {perf['n']} replication(s); results in {cfg.out}")
    if summary["failed"]:
        print(f"{summary['failed']} replication(s) failed", file=sys.stderr)
    return EXIT_OK if perf["n"] else EXIT_RUNTIME


def cmd_bench(args):
    doc = bench.load_json(args.config)
    if args.out is not None:
        doc["out"] = args.out
    rows, text, summaries = bench.run_study(doc)
    print(text)
    failed = sum(s["failed"] for s in summaries)
    if failed:
        print(f"{failed} replication(s) failed", file=sys.stderr)
    return EXIT_OK if any(r["n"] for r in rows) else EXIT_RUNTIME


def cmd_diag(args):
    from . import alfi

    cfg_path = os.path.join(args.run, "config.json")
    if not os.path.exists(cfg_path):
        raise ConfigError(f"{args.run} has no config.json; is it a run directory?")
    doc = bench.load_json(cfg_path)
    gen = make_generator(doc["generator"], **doc.get("generator_options", {}))
    state = None
    if os.path.exists(os.path.join(args.run, "alfi_state.json")):
        state = alfi.load_state(args.run)
    particles = None
    ppath = os.path.join(args.run, "particles.csv")
    if os.path.exists(ppath):
        by_iter = read_particles(ppath)
        particles = by_iter[max(by_iter)]
    out = args.out or args.run
    info = bench.emit_diagnostics(state, gen, out, theta_star=doc.get("theta_star"),
                                  particles=particles, resolution=args.resolution,
                                  seed=int(doc.get("seed", 0)), x_obs=doc.get("x_obs"))
    for path in info["files"]:
        print(path)
    for note in info["notices"]:
        print(note, file=sys.stderr)
    if "ks_theta_star" in info:
        print(f"KS distance at theta*: {info['ks_theta_star']:.4f}")
    return EXIT_OK


def cmd_list(args):
    print("generators:")
    for name, cls in GENERATORS.items():
        g = cls()
        box = ", ".join(f"[{lo:g}, {hi:g}]" for lo, hi in zip(g.box.lower, g.box.upper))
        print(f"  {name:<18} d={g.d} q={g.q} box={box}")
    print("algorithms:")
    for name in bench.ALGORITHMS:
        print(f"  {name}")
    for name in bench.RESERVED:
        print(f"  {name} (not implemented)")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="lfi", description="Likelihood-free inference runs and studies.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one algorithm on one generator")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)
    b = sub.add_parser("bench", help="multi-algorithm comparison study")
    b.add_argument("--config", required=True)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    d = sub.add_parser("diag", help="emit diagnostics CSVs for a run directory")
    d.add_argument("--run", required=True)
    d.add_argument("--out")
    d.add_argument("--resolution", type=int, default=50)
    d.set_defaults(func=cmd_diag)
    ls = sub.add_parser("list", help="list generators and algorithms")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LfiError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
