"""Experiment orchestration: replications, the performance metric and reports.

A replication draws (or reads) a true parameter, averages ``repeats``
simulations at it into ``x_obs``, runs one algorithm and scores its point
estimate with ``-log ||theta* - theta_hat||``. Every random choice derives
from the experiment seed through named substreams, so a study is a pure
function of its configuration.
"""
from __future__ import annotations

import copy
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import alfi, dist
from .baselines import AbcConfig, AvoConfig, avo_run, mcmc_abc, rejection_abc, smc_abc
from .errors import ConfigError, DomainError, LfiError
from .results import dump_json, write_grid_csv, write_run
from .rng import child_seed, stream
from .sim import GENERATORS, discrepancy_map, grid_points, make_generator, make_observation

log = logging.getLogger(__name__)

DISTANCE_FLOOR = 1e-12
THETA_STAR_FRACTION = 0.8

ALGORITHMS = ("alfi-beta", "alfi-gaussian", "rejection_abc", "mcmc_abc", "smc_abc", "avo")
# listed by `lfi list` but not implemented
RESERVED = ("bolfi", "romc")


def performance_metric(theta_star, theta_hat):
    """``-log ||theta_star - theta_hat||_2`` with the distance floored at 1e-12."""
    a = np.atleast_1d(np.asarray(theta_star, float))
    b = np.atleast_1d(np.asarray(theta_hat, float))
    if a.shape != b.shape:
        raise DomainError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(-math.log(max(float(np.linalg.norm(a - b)), DISTANCE_FLOOR)))


@dataclass
class ExperimentConfig:
    generator: str
    algorithm: str
    generator_options: dict = field(default_factory=dict)
    algorithm_options: dict = field(default_factory=dict)
    theta_star: list | None = None
    replications: int = 1
    repeats: int = 100
    budget: int | None = None
    out: str | None = None
    seed: int = 0

    def validate(self):
        if self.generator not in GENERATORS:
            raise ConfigError(f"unknown generator {self.generator!r}; choose from {sorted(GENERATORS)}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {list(ALGORITHMS)}")
        if int(self.repeats) < 1:
            raise ConfigError("repeats must be at least 1")
        if int(self.replications) < 1:
            raise ConfigError("replications must be at least 1")
        if self.budget is not None and int(self.budget) < 1:
            raise ConfigError("budget must be at least 1")
        try:
            gen = make_generator(self.generator, **self.generator_options)
        except TypeError as exc:
            raise ConfigError(f"bad generator options: {exc}") from None
        if self.theta_star is not None:
            theta = np.atleast_1d(np.asarray(self.theta_star, float))
            if theta.shape != (gen.d,) or not gen.box.contains(theta):
                raise ConfigError(f"theta_star {self.theta_star} is not a point of the {gen.name} box")
        build_algorithm(self.algorithm, self.algorithm_options, self.budget, 0)
        return gen

    @classmethod
    def from_dict(cls, doc):
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        for key in ("generator", "algorithm"):
            if key not in doc:
                raise ConfigError(f"experiment config needs a {key!r} entry")
        return cls(**copy.deepcopy(doc))

    def to_dict(self):
        return asdict(self)


def load_json(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return doc


def build_algorithm(name, options, budget, seed):
    """Resolve an algorithm name and options into its config object.

    ``budget`` is a total simulation count; it sets ``t_outer`` for ALFI
    (``budget // n_particles``), ``iterations`` for AVO and ``budget`` for
    the ABC samplers.
    """
    options = dict(options or {})
    try:
        if name.startswith("alfi"):
            options.setdefault("family", name.split("-", 1)[1])
            options["seed"] = seed
            cfg = alfi.AlfiConfig.from_dict(options)
            if budget is not None:
                cfg.t_outer = max(1, int(budget) // cfg.n_particles)
            cfg.validate()
        elif name == "avo":
            cfg = AvoConfig.from_dict(options)
            if budget is not None:
                cfg.iterations = max(1, int(budget) // cfg.batch_size)
            cfg.validate()
        elif name in ("rejection_abc", "mcmc_abc", "smc_abc"):
            cfg = AbcConfig.from_dict(options)
            if budget is not None:
                cfg.budget = int(budget)
            cfg.validate()
        else:
            raise ConfigError(f"unknown algorithm {name!r}")
    except TypeError as exc:
        raise ConfigError(f"bad options for {name}: {exc}") from None
    return cfg


def run_algorithm(name, cfg, gen, x_obs, seed):
    """Run one configured algorithm; returns its :class:`RunResult`."""
    if name.startswith("alfi"):
        cfg = copy.copy(cfg)
        cfg.seed = seed
        try:
            return alfi.run(cfg, gen, x_obs)
        except alfi.RunAborted as exc:
            raise LfiError(str(exc)) from exc
    rng = stream(seed, name)
    if name == "avo":
        return avo_run(gen, x_obs, cfg, rng)
    return {"rejection_abc": rejection_abc, "mcmc_abc": mcmc_abc, "smc_abc": smc_abc}[name](
        gen, x_obs, cfg, rng)


def sample_theta_star(gen, seed, k):
    """True parameter for replication ``k``: uniform over the central 80% of the box."""
    return gen.box.shrink(THETA_STAR_FRACTION).uniform(stream(seed, "theta_star", k))


def replication_dir(out, k, replications):
    if out is None:
        return None
    return out if replications == 1 else os.path.join(out, f"rep_{k:03d}")


def run_replication(cfg, gen, algo_cfg, k):
    """Run replication ``k`` of ``cfg`` and score it against its true parameter."""
    theta_star = (np.atleast_1d(np.asarray(cfg.theta_star, float)) if cfg.theta_star is not None
                  else sample_theta_star(gen, cfg.seed, k))
    x_obs = make_observation(gen, theta_star, cfg.repeats, seed=child_seed(cfg.seed, "observation", k))
    result = run_algorithm(cfg.algorithm, algo_cfg, gen, x_obs,
                           child_seed(cfg.seed, "algorithm", k))
    result.algorithm = cfg.algorithm
    result.theta_star = theta_star
    if result.theta_hat is not None:
        result.performance = performance_metric(theta_star, result.theta_hat)
    result.info["x_obs"] = x_obs
    result.info["budget"] = int(result.n_simulations)
    return result


def summarize(values):
    v = np.asarray([x for x in values if x is not None and np.isfinite(x)], float)
    if v.size == 0:
        return {"mean": None, "sd": None, "n": 0}
    return {"mean": float(v.mean()), "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
            "n": int(v.size)}


def run_experiment(cfg):
    """Run every replication of ``cfg``.

    Returns ``(results, summary)``; ``results`` holds the successful
    :class:`RunResult` objects and ``summary`` the mean/sd of the metric over
    them plus the failure count. When ``cfg.out`` is set each replication is
    written to disk (directly into ``out`` for a single replication).
    """
    gen = cfg.validate()
    algo_cfg = build_algorithm(cfg.algorithm, cfg.algorithm_options, cfg.budget, cfg.seed)
    results, records, failures = [], [], []
    for k in range(int(cfg.replications)):
        try:
            result = run_replication(cfg, gen, algo_cfg, k)
        except (LfiError, FloatingPointError, np.linalg.LinAlgError) as exc:
            log.warning("replication %d failed: %s", k, exc)
            failures.append({"replication": k, "error": str(exc)})
            continue
        results.append(result)
        rec = {"replication": k, "theta_star": result.theta_star, "theta_hat": result.theta_hat,
               "performance": result.performance, "n_simulations": result.n_simulations}
        records.append(rec)
        out = replication_dir(cfg.out, k, cfg.replications)
        if out is not None:
            write_run(result, out)
            rep_cfg = cfg.to_dict()
            rep_cfg.update(theta_star=np.asarray(result.theta_star).tolist(), replications=1,
                           replication=k, x_obs=result.info["x_obs"])
            dump_json(rep_cfg, os.path.join(out, "config.json"))
    summary = {
        "generator": cfg.generator,
        "algorithm": cfg.algorithm,
        "replications": records,
        "failed": len(failures),
        "failures": failures,
        "performance": summarize([r["performance"] for r in records]),
        "budget_per_run": sorted({int(r["n_simulations"]) for r in records}),
    }
    if cfg.out is not None and int(cfg.replications) > 1:
        os.makedirs(cfg.out, exist_ok=True)
        dump_json(summary, os.path.join(cfg.out, "summary.json"))
    return results, summary


def compare_table(cells, tol=1e-12):
    """Mean and sd per (algorithm, generator) cell with the per-generator best flagged.

    ``cells`` maps ``(algorithm, generator)`` to a list of metric values.
    Returns ``(rows, text)``: ``rows`` are dicts with keys algorithm,
    generator, mean, sd, n, best; ``text`` is an aligned rendering where a
    ``*`` marks the best algorithm (every tied algorithm is marked).
    """
    if not cells:
        raise ConfigError("compare_table needs at least one cell")
    rows = []
    for (algo, gen), values in cells.items():
        s = summarize(values)
        rows.append({"algorithm": algo, "generator": gen, "mean": s["mean"], "sd": s["sd"],
                     "n": s["n"], "best": False})
    gens = list(dict.fromkeys(r["generator"] for r in rows))
    algos = list(dict.fromkeys(r["algorithm"] for r in rows))
    for g in gens:
        means = [r["mean"] for r in rows if r["generator"] == g and r["mean"] is not None]
        if not means:
            continue
        top = max(means)
        for r in rows:
            if r["generator"] == g and r["mean"] is not None and top - r["mean"] <= tol:
                r["best"] = True
    lookup = {(r["algorithm"], r["generator"]): r for r in rows}

    def cell(a, g):
        r = lookup.get((a, g))
        if r is None:
            return "-"
        if r["mean"] is None:
            return "failed"
        return f"{r['mean']:.2f} ± {r['sd']:.2f}" + (" *" if r["best"] else "")

    header = ["algorithm"] + gens
    body = [[a] + [cell(a, g) for g in gens] for a in algos]
    widths = [max(len(str(line[i])) for line in [header] + body) for i in range(len(header))]
    fmt = lambda line: "  ".join(str(c).ljust(w) for c, w in zip(line, widths)).rstrip()
    text = "\n".join([fmt(header), fmt(["-" * w for w in widths])] + [fmt(b) for b in body])
    return rows, text


def write_table(rows, path):
    write_grid_csv(path, ["algorithm", "generator", "mean", "sd", "n", "best"],
                   [[r["algorithm"], r["generator"], "" if r["mean"] is None else r["mean"],
                     "" if r["sd"] is None else r["sd"], r["n"], int(r["best"])] for r in rows])


def run_study(doc):
    """Run a multi-algorithm, multi-generator study from a bench config dict.

    Keys: ``generators``, ``algorithms`` (lists), ``replications``,
    ``budget``, ``repeats``, ``seed``, ``out`` and optional per-name option
    maps ``generator_options`` / ``algorithm_options``. Every algorithm sees
    the same true parameters and observations for a given generator and
    replication.
    """
    allowed = {"generators", "algorithms", "replications", "budget", "repeats", "seed", "out",
               "generator_options", "algorithm_options", "theta_star"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown bench keys: {sorted(unknown)}")
    if not doc.get("generators") or not doc.get("algorithms"):
        raise ConfigError("bench config needs non-empty 'generators' and 'algorithms' lists")
    out = doc.get("out")
    cells, summaries = {}, []
    configs = []
    for g in doc["generators"]:
        for a in doc["algorithms"]:
            cfg = ExperimentConfig(
                generator=g, algorithm=a,
                generator_options=doc.get("generator_options", {}).get(g, {}),
                algorithm_options=doc.get("algorithm_options", {}).get(a, {}),
                theta_star=doc.get("theta_star", {}).get(g),
                replications=int(doc.get("replications", 1)), repeats=int(doc.get("repeats", 100)),
                budget=doc.get("budget"), seed=int(doc.get("seed", 0)),
                out=None if out is None else os.path.join(out, g, a))
            cfg.validate()
            configs.append(cfg)
    for cfg in configs:
        _, summary = run_experiment(cfg)
        summaries.append(summary)
        cells[(cfg.algorithm, cfg.generator)] = [r["performance"] for r in summary["replications"]]
    rows, text = compare_table(cells)
    if out is not None:
        os.makedirs(out, exist_ok=True)
        write_table(rows, os.path.join(out, "table.csv"))
        with open(os.path.join(out, "table.txt"), "w") as fh:
            fh.write(text + "\n")
        dump_json({"cells": rows, "studies": summaries}, os.path.join(out, "summary.json"))
    return rows, text, summaries


def score_sample(state, gen, theta, n=100, seed=0):
    """Discriminator scores of ``n`` fresh simulations at ``theta``."""
    seeds = [child_seed(seed, "score-sample", j) for j in range(n)]
    sims = np.array([gen.simulate(theta, s) for s in seeds])
    return np.atleast_1d(alfi.discriminate(state, sims))


def encoder_fit_ks(state, gen, theta, n=100, seed=0):
    """KS distance between the encoder's fitted law at ``theta`` and fresh scores.

    Returns ``(ks, scores, shapes)``.
    """
    ys = dist.clamp_unit(score_sample(state, gen, theta, n, seed))
    s = alfi.encode(state, np.atleast_2d(theta))[0]
    cdf = lambda y: dist.family_cdf(state.family, s[0], s[1], state.transform, dist.clamp_unit(y))
    ks = stats.kstest(ys, cdf).statistic
    return float(ks), ys, s


def local_maxima(values, rel=0.5):
    """Indices of strict-or-plateau local maxima of a non-negative 1-d array
    that reach ``rel`` times its maximum."""
    v = np.asarray(values, float)
    thresh = rel * v.max()
    out = []
    for i in range(len(v)):
        left = v[i - 1] if i > 0 else -np.inf
        right = v[i + 1] if i < len(v) - 1 else -np.inf
        if v[i] >= thresh and v[i] > left and v[i] >= right:
            out.append(i)
    return out


def emit_diagnostics(state, gen, out_dir, theta_star=None, particles=None, resolution=50,
                     n_scores=100, seed=0, x_obs=None):
    """Write plot-ready CSV diagnostics for a run.

    Files (grids only for one- or two-parameter generators):

    ``grid_discrepancy.csv``
        Euclidean discrepancy to ``x_obs`` over a cell-centred grid.
    ``grid_encoder_mean.csv`` / ``grid_loglik.csv``
        Mean of the fitted family and the estimated log-likelihood.
    ``density_theta_star.csv``
        Fitted density of the score at ``theta_star`` next to a KDE of
        ``n_scores`` fresh scores.
    ``particles_final.csv``
        The final ensemble, when given.

    ``state`` may be ``None`` (a non-ALFI run); only the discrepancy grid
    and the particles are written then, and ``x_obs`` must be given.
    Returns a dict with the written paths and scalar diagnostics.
    """
    if state is None and x_obs is None:
        raise ConfigError("diagnostics without a trained state need x_obs")
    x_obs = state.x_obs if x_obs is None else np.atleast_1d(np.asarray(x_obs, float))
    os.makedirs(out_dir, exist_ok=True)
    info = {"files": [], "notices": []}
    cols = [f"theta_{k}" for k in range(gen.d)]

    def write(name, columns, rows):
        path = os.path.join(out_dir, name)
        write_grid_csv(path, columns, rows)
        info["files"].append(path)

    if gen.d in (1, 2):
        _, grid = discrepancy_map(gen, x_obs, resolution, seed=seed)
        _, pts = grid_points(gen.box, resolution)
        write("grid_discrepancy.csv", cols + ["discrepancy"],
              [list(p) + [v] for p, v in zip(pts, grid.ravel())])
        if state is not None:
            shapes = alfi.encode(state, pts)
            mean = shapes[:, 0] / shapes.sum(axis=1) if state.family == "beta" else shapes[:, 0]
            ll = np.atleast_1d(alfi.estimate_loglik(state, pts))
            write("grid_encoder_mean.csv", cols + ["encoder_mean"],
                  [list(p) + [v] for p, v in zip(pts, mean)])
            write("grid_loglik.csv", cols + ["loglik"], [list(p) + [v] for p, v in zip(pts, ll)])
            info["loglik_argmax"] = pts[int(np.argmax(ll))].tolist()
            if gen.d == 1:
                lik = np.exp(ll - ll.max())
                info["loglik_local_maxima"] = [float(pts[i, 0]) for i in local_maxima(lik)]
    else:
        info["notices"].append(f"grids skipped: {gen.d} parameters (only 1 or 2 are gridded)")
    if state is not None and theta_star is not None:
        ks, ys, s = encoder_fit_ks(state, gen, theta_star, n_scores, seed)
        y = np.linspace(1e-3, 1 - 1e-3, 200)
        fitted = np.exp(dist.family_logpdf_arrays(state.family, s[0], s[1], state.transform, y))
        kde = dist.kde_pdf(ys, None if np.ptp(ys) > 0 else 1e-3, y)
        write("density_theta_star.csv", ["y", "fitted_density", "kde_density"],
              zip(y, fitted, kde))
        info["ks_theta_star"] = ks
        info["shapes_theta_star"] = np.asarray(s).tolist()
    if particles is not None:
        write("particles_final.csv", cols, np.atleast_2d(particles).tolist())
    if state is not None:
        info["d_obs"] = state.d_obs
    dump_json({k: v for k, v in info.items() if k != "files"},
              os.path.join(out_dir, "diagnostics_summary.json"))
    return info
