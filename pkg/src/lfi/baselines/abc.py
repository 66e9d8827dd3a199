"""Approximate Bayesian computation with a boxcar kernel.

All three samplers use the Euclidean discrepancy ``||g(theta, u) - x_obs||``
and a uniform prior on the generator box. The tolerance is either a fixed
``epsilon`` or an acceptance ``quantile`` of the discrepancies seen in a
pilot sample.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .. import dist
from ..errors import ConfigError
from ..results import RunResult
from ..rng import as_generator
from ..sim import simulate_many

DEFAULT_QUANTILE = 0.01


@dataclass
class AbcConfig:
    epsilon: float | None = None
    quantile: float | None = None
    budget: int = 10_000
    population: int = 100
    schedule: tuple | None = None
    proposal_step: object = None
    pilot_fraction: float = 0.1
    workers: int | None = None

    def __post_init__(self):
        if self.epsilon is None and self.quantile is None:
            self.quantile = DEFAULT_QUANTILE
        if self.schedule is not None:
            self.schedule = tuple(float(e) for e in self.schedule)

    def validate(self):
        if (self.epsilon is None) == (self.quantile is None):
            raise ConfigError("set exactly one of epsilon and quantile")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.quantile is not None and not 0 < self.quantile < 1:
            raise ConfigError("quantile must lie in (0, 1)")
        if int(self.budget) < 1:
            raise ConfigError("budget must be at least 1")
        if int(self.population) < 2:
            raise ConfigError("population must hold at least two particles")
        if not 0 < self.pilot_fraction < 1:
            raise ConfigError("pilot_fraction must lie in (0, 1)")
        if self.schedule is not None:
            s = np.asarray(self.schedule)
            if s.size < 1 or np.any(s <= 0):
                raise ConfigError("schedule needs at least one positive tolerance")
            if np.any(np.diff(s) >= 0):
                raise ConfigError("schedule must be strictly decreasing")

    @classmethod
    def from_dict(cls, doc):
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown ABC options: {sorted(unknown)}")
        return cls(**doc)


def _discrepancy(summaries, x_obs):
    return np.linalg.norm(np.asarray(summaries, float).reshape(len(summaries), -1)
                          - np.asarray(x_obs, float), axis=1)


def _draw(gen, thetas, rng, workers):
    seeds = rng.integers(0, 2 ** 63 - 1, size=len(thetas))
    return np.asarray(simulate_many(gen, thetas, seeds, workers=workers)).reshape(len(thetas), gen.q)


def _mode(samples, weights=None):
    return dist.sample_mode(samples, weights) if len(samples) else None


def rejection_abc(gen, x_obs, cfg, rng=None):
    """Uniform-prior rejection sampler.

    In epsilon mode every draw with discrepancy below ``epsilon`` is kept; in
    quantile mode the ``ceil(quantile * budget)`` closest draws are kept.
    """
    cfg.validate()
    rng = as_generator(rng)
    t0 = time.perf_counter()
    thetas = gen.box.uniform(rng, int(cfg.budget))
    t1 = time.perf_counter()
    dists = _discrepancy(_draw(gen, thetas, rng, cfg.workers), x_obs)
    t2 = time.perf_counter()
    if cfg.epsilon is not None:
        eps = float(cfg.epsilon)
        keep = dists < eps
    else:
        k = max(1, math.ceil(cfg.quantile * len(dists)))
        order = np.argsort(dists, kind="stable")[:k]
        keep = np.zeros(len(dists), bool)
        keep[order] = True
        eps = float(dists[order[-1]])
    samples = thetas[keep]
    result = RunResult("rejection_abc", gen.name, _mode(samples), samples,
                       n_simulations=len(thetas))
    result.timings.update(sample=t1 - t0, simulate=t2 - t1)
    rate = float(keep.mean())
    result.info = {"epsilon": eps, "acceptance_rate": rate, "accepted": int(keep.sum())}
    if not keep.any():
        result.info["diagnostic"] = "no draw fell inside the tolerance"
    result.diagnostics.append({"epsilon": eps, "acceptance_rate": rate,
                               "accepted": int(keep.sum())})
    return result


def _pilot_tolerance(gen, x_obs, cfg, rng, n_pilot):
    """Tolerance and starting point from a pilot rejection sample."""
    thetas = gen.box.uniform(rng, n_pilot)
    dists = _discrepancy(_draw(gen, thetas, rng, cfg.workers), x_obs)
    k = max(1, math.ceil(cfg.quantile * n_pilot))
    order = np.argsort(dists, kind="stable")[:k]
    best = thetas[order]
    return float(dists[order[-1]]), best


def mcmc_abc(gen, x_obs, cfg, rng=None):
    """Likelihood-free Metropolis sampler.

    A proposal is accepted when one fresh simulation at it lands inside the
    tolerance ball; the current point is never re-simulated. In quantile mode
    a pilot sample (``pilot_fraction`` of the budget) fixes the tolerance,
    the starting point and, unless ``proposal_step`` is given, the step size.
    The returned chain starts at the first accepted state.
    """
    cfg.validate()
    rng = as_generator(rng)
    box = gen.box
    budget = int(cfg.budget)
    t0 = time.perf_counter()
    if cfg.epsilon is not None:
        eps = float(cfg.epsilon)
        n_pilot = 0
        current = box.uniform(rng)
        inside = False
        scale = None
    else:
        n_pilot = max(1, int(round(cfg.pilot_fraction * budget)))
        eps, best = _pilot_tolerance(gen, x_obs, cfg, rng, n_pilot)
        current = best[0].copy()
        inside = True
        scale = best.std(axis=0) if len(best) > 1 else None
    if cfg.proposal_step is not None:
        step = np.broadcast_to(np.asarray(cfg.proposal_step, float), (box.d,)).copy()
    elif scale is not None and np.all(scale > 0):
        step = np.maximum(scale, 1e-3 * box.width)
    else:
        step = 0.1 * box.width
    t_sim = 0.0
    chain, accepted, steps = [], 0, 0
    if inside:
        chain.append(current.copy())
    for _ in range(budget - n_pilot):
        prop = box.reflect(current + step * rng.standard_normal(box.d))
        ts = time.perf_counter()
        x = gen.simulate(prop, int(rng.integers(0, 2 ** 63 - 1)))
        t_sim += time.perf_counter() - ts
        steps += 1
        if np.linalg.norm(x - x_obs) < eps:
            current = prop
            accepted += 1
            inside = True
        if inside:
            chain.append(current.copy())
    samples = np.asarray(chain).reshape(-1, box.d)
    elapsed = time.perf_counter() - t0
    result = RunResult("mcmc_abc", gen.name, _mode(samples), samples, n_simulations=budget)
    result.timings.update(simulate=t_sim, sample=elapsed - t_sim)
    rate = accepted / steps if steps else 0.0
    result.info = {"epsilon": eps, "acceptance_rate": rate, "stall_fraction": 1.0 - rate,
                   "proposal_step": step, "pilot": n_pilot}
    if not len(samples):
        result.info["diagnostic"] = "chain never entered the tolerance ball"
    result.diagnostics.append({"epsilon": eps, "acceptance_rate": rate,
                               "chain_length": len(samples)})
    return result


def effective_sample_size(weights):
    w = np.asarray(weights, float)
    s = w.sum()
    return float(s * s / np.sum(w * w)) if s > 0 else 0.0


def _smc_level(gen, x_obs, eps, prev, prev_w, cov, n, rng, remaining, workers):
    """Fill one population at tolerance ``eps`` from the previous one.

    Simulations run in batches of ``n`` draws; returns ``None`` when the
    budget runs out before ``n`` particles are accepted.
    """
    box = gen.box
    chol = np.linalg.cholesky(cov)
    inv = np.linalg.inv(cov)
    accepted, acc_d, used = [], [], 0
    while len(accepted) < n:
        batch = min(n, remaining - used)
        if batch <= 0:
            return None, used
        if prev is None:
            props = box.uniform(rng, batch)
        else:
            props = np.empty((batch, box.d))
            filled = 0
            while filled < batch:
                idx = rng.choice(len(prev), size=batch - filled, p=prev_w)
                cand = prev[idx] + rng.standard_normal((batch - filled, box.d)) @ chol.T
                ok = np.all((cand >= box.lower) & (cand <= box.upper), axis=1)
                cand = cand[ok]
                props[filled:filled + len(cand)] = cand
                filled += len(cand)
        dists = _discrepancy(_draw(gen, props, rng, workers), x_obs)
        used += batch
        accepted.extend(props[dists < eps])
        acc_d.extend(dists[dists < eps])
    pop = np.asarray(accepted[:n])
    if prev is None:
        w = np.full(n, 1.0 / n)
    else:
        diff = pop[:, None, :] - prev[None, :, :]
        kern = np.exp(-0.5 * np.einsum("ijk,kl,ijl->ij", diff, inv, diff))
        w = 1.0 / (kern @ prev_w)
        w /= w.sum()
    return (pop, w, np.asarray(acc_d[:n])), used


def _weighted_cov(pop, w, box):
    mean = w @ pop
    c = ((pop - mean).T * w) @ (pop - mean)
    c = np.atleast_2d(c) * 2.0
    return c + np.diag((1e-6 * box.width) ** 2)


def smc_abc(gen, x_obs, cfg, rng=None):
    """Population Monte Carlo ABC over a decreasing tolerance schedule.

    Each level draws from the previous weighted population, perturbs with a
    Gaussian kernel whose covariance is twice the weighted population
    covariance, and reweights by prior / proposal density. Without an explicit
    schedule the first level uses the prior (infinite tolerance) and every
    later tolerance is the median discrepancy of the current population,
    until the budget is spent. The last complete population is returned.
    """
    cfg.validate()
    rng = as_generator(rng)
    box = gen.box
    n = int(cfg.population)
    budget = int(cfg.budget)
    t0 = time.perf_counter()
    adaptive = cfg.schedule is None
    schedule = [math.inf] if adaptive else list(cfg.schedule)
    pop = w = None
    used = 0
    diagnostics = []
    stop = "schedule complete"
    level = 0
    while level < len(schedule):
        eps = schedule[level]
        cov = None if pop is None else _weighted_cov(pop, w, box)
        cov = np.eye(box.d) if cov is None else cov
        out, spent = _smc_level(gen, x_obs, eps, pop, w, cov, n, rng, budget - used, cfg.workers)
        used += spent
        if out is None:
            stop = "budget exhausted"
            break
        pop, w, pop_d = out
        ess = effective_sample_size(w)
        diagnostics.append({"level": level, "epsilon": eps, "ess": ess, "simulations": spent,
                            "acceptance_rate": n / spent})
        if ess < 2:
            stop = "population collapsed (ESS < 2)"
            break
        if adaptive:
            nxt = float(np.median(pop_d))
            if not nxt < eps or nxt <= 0:
                stop = "tolerance stopped decreasing"
                break
            schedule.append(nxt)
        level += 1
    elapsed = time.perf_counter() - t0
    samples = np.empty((0, box.d)) if pop is None else pop
    result = RunResult("smc_abc", gen.name, _mode(samples, w), samples, weights=w,
                       n_simulations=used)
    result.timings.update(sample=elapsed)
    result.diagnostics = diagnostics
    result.info = {"levels": len(diagnostics), "stop": stop,
                   "epsilon": diagnostics[-1]["epsilon"] if diagnostics else None,
                   "ess": diagnostics[-1]["ess"] if diagnostics else 0.0}
    return result

