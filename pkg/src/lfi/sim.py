"""Black-box stochastic generators with embedded summary statistics.

A generator maps a parameter vector inside its box and an integer seed to a
finite summary vector. The nuisance randomness is drawn from a seeded
stream private to each call, so ``simulate(gen, theta, s)`` is a pure
function of its arguments.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SimulationError
from .rng import child_seed, stream


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __init__(self, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, float))
        upper = np.atleast_1d(np.asarray(upper, float))
        if lower.shape != upper.shape or lower.ndim != 1 or lower.size < 1:
            raise DomainError("box bounds must be 1-d arrays of equal length")
        if np.any(lower >= upper):
            raise DomainError("box needs lower < upper in every coordinate")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def d(self):
        return self.lower.size

    @property
    def width(self):
        return self.upper - self.lower

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def volume(self):
        return float(np.prod(self.width))

    def contains(self, theta):
        theta = np.asarray(theta, float)
        return bool(np.all((theta >= self.lower) & (theta <= self.upper)))

    def uniform(self, rng, n=None):
        size = (self.d,) if n is None else (n, self.d)
        return self.lower + self.width * rng.random(size)

    def reflect(self, x):
        """Fold points back into the box by mirror reflection at the faces."""
        x = np.asarray(x, float)
        w = self.width
        y = np.mod(x - self.lower, 2.0 * w)
        y = np.where(y > w, 2.0 * w - y, y)
        return np.clip(self.lower + y, self.lower, self.upper)

    def to_unit(self, theta):
        return (np.asarray(theta, float) - self.lower) / self.width

    def from_unit(self, u):
        return self.lower + np.asarray(u, float) * self.width

    def shrink(self, fraction):
        """Central sub-box covering ``fraction`` of each side."""
        half = 0.5 * fraction * self.width
        return Box(self.center - half, self.center + half)


class Generator:
    """Base class; subclasses implement ``_simulate(theta, rng)``."""

    name = "generator"
    q = 1

    def __init__(self, box):
        self.box = box

    @property
    def d(self):
        return self.box.d

    def check(self, theta):
        theta = np.atleast_1d(np.asarray(theta, float))
        if theta.shape != (self.d,):
            raise DomainError(f"{self.name} expects {self.d} parameters, got shape {theta.shape}")
        if not self.box.contains(theta):
            raise DomainError(f"{self.name}: theta={theta.tolist()} outside the parameter box")
        return theta

    def simulate(self, theta, seed):
        theta = self.check(theta)
        x = np.atleast_1d(np.asarray(self._simulate(theta, stream(seed, self.name)), float))
        if x.shape != (self.q,) or not np.all(np.isfinite(x)):
            raise SimulationError(f"{self.name} produced a non-finite summary", theta=theta)
        return x

    def _simulate(self, theta, rng):
        raise NotImplementedError

    def params(self):
        return {}

    def __repr__(self):
        kw = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({kw})"


class Quadratic(Generator):
    """``(theta - 0.5)**2 + u`` on the unit interval; bimodal in theta."""

    name = "quadratic"
    q = 1

    def __init__(self, noise_sd=0.01):
        super().__init__(Box([0.0], [1.0]))
        self.noise_sd = float(noise_sd)

    def _simulate(self, theta, rng):
        return (theta - 0.5) ** 2 + self.noise_sd * rng.standard_normal(1)

    def params(self):
        return {"noise_sd": self.noise_sd}


class GaussianLocation(Generator):
    """``theta + u`` with isotropic Gaussian noise on the unit cube."""

    name = "gaussian_location"

    def __init__(self, d=1, sigma=0.1):
        d = int(d)
        super().__init__(Box(np.zeros(d), np.ones(d)))
        self.q = d
        self.sigma = float(sigma)

    def _simulate(self, theta, rng):
        return theta + self.sigma * rng.standard_normal(self.q)

    def params(self):
        return {"d": self.d, "sigma": self.sigma}


class Identity(Generator):
    """``g(theta) = theta`` plus optional Gaussian noise on the unit cube.

    Noise-free by default, which makes ABC acceptance regions exact.
    """

    name = "identity"

    def __init__(self, d=1, noise_sd=0.0):
        d = int(d)
        super().__init__(Box(np.zeros(d), np.ones(d)))
        self.q = d
        self.noise_sd = float(noise_sd)

    def _simulate(self, theta, rng):
        x = theta.copy()
        if self.noise_sd > 0:
            x += self.noise_sd * rng.standard_normal(self.q)
        return x

    def params(self):
        return {"d": self.d, "noise_sd": self.noise_sd}


class SIR(Generator):
    """Deterministic SIR epidemic sampled at equispaced times with Gaussian noise.

    theta = (infection rate, recovery rate). The ODE is integrated with
    fixed-step RK4 and the summary is the infectious count at ``n_obs``
    equispaced times, each perturbed by N(0, (noise_frac * population)^2).
    """

    name = "sir"

    def __init__(self, population=1000.0, infected0=10.0, horizon=40.0, dt=0.1,
                 n_obs=10, noise_frac=0.02, lower=(0.05, 0.05), upper=(1.0, 1.0)):
        super().__init__(Box(lower, upper))
        self.population = float(population)
        self.infected0 = float(infected0)
        self.horizon = float(horizon)
        self.dt = float(dt)
        self.n_obs = int(n_obs)
        self.q = self.n_obs
        self.noise_frac = float(noise_frac)
        self.n_steps = int(round(self.horizon / self.dt))
        if self.n_steps % self.n_obs:
            raise DomainError("horizon/dt must be a multiple of n_obs")

    def params(self):
        return {"population": self.population, "infected0": self.infected0,
                "horizon": self.horizon, "dt": self.dt, "n_obs": self.n_obs,
                "noise_frac": self.noise_frac,
                "lower": self.box.lower.tolist(), "upper": self.box.upper.tolist()}

    def trajectory(self, theta):
        """Noise-free (S, I, R) at every RK4 step, shape (n_steps + 1, 3)."""
        beta, gamma = float(theta[0]), float(theta[1])
        n = self.population
        h = self.dt

        def rhs(s, i):
            inf = beta * s * i / n
            rec = gamma * i
            return -inf, inf - rec, rec

        out = np.empty((self.n_steps + 1, 3))
        s, i, r = n - self.infected0, self.infected0, 0.0
        out[0] = s, i, r
        for k in range(1, self.n_steps + 1):
            a1, b1, c1 = rhs(s, i)
            a2, b2, c2 = rhs(s + 0.5 * h * a1, i + 0.5 * h * b1)
            a3, b3, c3 = rhs(s + 0.5 * h * a2, i + 0.5 * h * b2)
            a4, b4, c4 = rhs(s + h * a3, i + h * b3)
            s += h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
            i += h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
            r += h / 6.0 * (c1 + 2 * c2 + 2 * c3 + c4)
            if not (math.isfinite(s) and math.isfinite(i)):
                raise SimulationError("SIR integration diverged", theta=np.asarray(theta))
            out[k] = s, i, r
        return out

    def _simulate(self, theta, rng):
        stride = self.n_steps // self.n_obs
        infected = self.trajectory(theta)[stride::stride, 1]
        return infected + self.noise_frac * self.population * rng.standard_normal(self.n_obs)


class MA2(Generator):
    """Second-order moving average; summary = autocovariances at lags 0, 1, 2."""

    name = "ma2"
    q = 3

    def __init__(self, length=100, lower=(-2.0, -1.0), upper=(2.0, 1.0)):
        super().__init__(Box(lower, upper))
        self.length = int(length)

    def params(self):
        return {"length": self.length, "lower": self.box.lower.tolist(),
                "upper": self.box.upper.tolist()}

    def series(self, theta, rng):
        u = rng.standard_normal(self.length + 2)
        return u[2:] + theta[0] * u[1:-1] + theta[1] * u[:-2]

    def _simulate(self, theta, rng):
        x = self.series(theta, rng)
        t = self.length
        return np.array([x @ x / t, x[1:] @ x[:-1] / t, x[2:] @ x[:-2] / t])


class MG1(Generator):
    """Single-server FIFO queue with uniform service and Poisson arrivals.

    theta = (minimum service time, service-time range, arrival rate); service
    times are Uniform(theta[0], theta[0] + theta[1]). The summary is the 0%,
    10%, ..., 100% quantiles of the inter-departure times.
    """

    name = "mg1"
    q = 11

    def __init__(self, n_customers=50, lower=(0.0, 0.0, 0.1), upper=(10.0, 10.0, 0.5)):
        super().__init__(Box(lower, upper))
        self.n_customers = int(n_customers)

    def params(self):
        return {"n_customers": self.n_customers, "lower": self.box.lower.tolist(),
                "upper": self.box.upper.tolist()}

    def departures(self, theta, rng):
        n = self.n_customers
        service = theta[0] + theta[1] * rng.random(n)
        arrivals = np.cumsum(rng.exponential(1.0 / theta[2], n))
        dep = np.empty(n)
        last = 0.0
        for k in range(n):
            last = max(arrivals[k], last) + service[k]
            dep[k] = last
        return dep

    def _simulate(self, theta, rng):
        dep = self.departures(theta, rng)
        gaps = np.diff(dep, prepend=0.0)
        return np.percentile(gaps, np.linspace(0.0, 100.0, self.q))


GENERATORS = {
    "quadratic": Quadratic,
    "gaussian_location": GaussianLocation,
    "sir": SIR,
    "ma2": MA2,
    "mg1": MG1,
    "identity": Identity,
}


def make_generator(name, **overrides):
    try:
        cls = GENERATORS[name]
    except KeyError:
        raise DomainError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}") from None
    return cls(**overrides)


def simulate(gen, theta, seed):
    return gen.simulate(theta, seed)


def simulate_many(gen, thetas, seeds, workers=None, raise_errors=True):
    """Run ``gen`` once per (theta, seed) pair, optionally on a thread pool.

    With ``raise_errors=False`` a failed simulation yields its
    :class:`SimulationError` in place of a summary.
    """
    def one(args):
        theta, seed = args
        try:
            return gen.simulate(theta, int(seed))
        except SimulationError as exc:
            if raise_errors:
                raise
            return exc

    jobs = list(zip(thetas, seeds))
    if workers and workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, jobs))
    return [one(j) for j in jobs]


def observation_seeds(seed, repeats):
    return [child_seed(seed, "observation", j) for j in range(repeats)]


def make_observation(gen, theta_star, repeats=100, seed=0, workers=None):
    """Average of ``repeats`` independent simulations at ``theta_star``."""
    if repeats < 1:
        raise DomainError("repeats must be at least 1")
    theta_star = gen.check(theta_star)
    seeds = observation_seeds(seed, repeats)
    runs = simulate_many(gen, [theta_star] * repeats, seeds, workers=workers)
    return np.mean(runs, axis=0)


def grid_axes(box, resolution):
    """Cell-centre coordinates along each box dimension."""
    return [lo + (np.arange(resolution) + 0.5) * (hi - lo) / resolution
            for lo, hi in zip(box.lower, box.upper)]


def grid_points(box, resolution):
    axes = grid_axes(box, resolution)
    mesh = np.meshgrid(*axes, indexing="ij")
    return axes, np.stack([m.ravel() for m in mesh], axis=1)


def discrepancy_map(gen, x_obs, resolution=50, seed=0, workers=None):
    """Euclidean discrepancy ``||x_obs - g(theta, u)||`` on a cell-centred grid.

    Returns ``(axes, grid)`` where ``grid`` has shape ``(resolution,) * d``
    and index ``[i, j]`` corresponds to ``(axes[0][i], axes[1][j])``.
    """
    if gen.d not in (1, 2):
        raise DomainError("discrepancy maps are only drawn for one or two parameters")
    axes, pts = grid_points(gen.box, resolution)
    seeds = [child_seed(seed, "grid", k) for k in range(len(pts))]
    sims = np.asarray(simulate_many(gen, pts, seeds, workers=workers))
    dist = np.linalg.norm(sims - np.asarray(x_obs, float), axis=1)
    return axes, dist.reshape((resolution,) * gen.d)
