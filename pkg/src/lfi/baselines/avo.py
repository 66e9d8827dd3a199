"""Adversarial variational optimization with a Gaussian proposal.

A diagonal Gaussian ``p(theta) = N(mu, diag(sigma**2))`` is tuned so that
simulations at its draws fool a discriminator trained against the single
observation. The proposal gradient is the score-function (REINFORCE)
estimate

    grad V = E[ grad log p(theta) * b(d(g(theta, u))) ]

where ``b`` is the fake-sample term of the value function. Draws are
reflected into the box before simulation; the score is taken at the raw
draw, so the estimate stays unbiased for the reflected sampler.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .. import nn
from ..adversarial import Scaler, train_critic, value_pair, VALUE_FUNCTIONS
from ..errors import ConfigError
from ..results import RunResult
from ..rng import as_generator
from ..sim import simulate_many

SIGMA_FLOOR = 1e-4


@dataclass
class AvoConfig:
    value: str = "vanilla"
    iterations: int = 200
    batch_size: int = 50
    lr: float = 0.02
    disc_lr: float = 1e-3
    disc_steps: int = 5
    clip: float | None = None
    hidden: tuple = (64, 64)
    activation: str = "relu"
    baseline: bool = False
    init_mean: object = None
    init_std: object = None
    workers: int | None = None

    def validate(self):
        if self.value not in VALUE_FUNCTIONS:
            raise ConfigError(f"value must be one of {VALUE_FUNCTIONS}")
        for name in ("iterations", "batch_size", "disc_steps"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.init_std is not None and np.any(np.asarray(self.init_std, float) <= 0):
            raise ConfigError("proposal std must be positive")
        if self.clip is not None and self.clip <= 0:
            raise ConfigError("clip constant must be positive")

    @classmethod
    def from_dict(cls, doc):
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown AVO options: {sorted(unknown)}")
        doc = dict(doc)
        if "hidden" in doc:
            doc["hidden"] = tuple(doc["hidden"])
        return cls(**doc)


def gaussian_score(theta, mu, log_sigma):
    """Gradients of ``log N(theta; mu, sigma)`` with respect to ``(mu, log sigma)``.

    ``theta`` has shape (B, d); returns two arrays of that shape.
    """
    sigma = np.exp(log_sigma)
    r = (theta - mu) / sigma
    return r / sigma, r * r - 1.0


def reinforce_gradient(theta, rewards, mu, log_sigma, baseline=None):
    """Monte-Carlo score-function gradient of ``E[reward]``.

    Returns ``(g_mu, g_log_sigma, se_mu, se_log_sigma)``; the standard errors
    are those of the per-sample products.
    """
    theta = np.atleast_2d(theta)
    r = np.asarray(rewards, float).reshape(-1)
    if baseline is not None:
        r = r - baseline
    s_mu, s_ls = gaussian_score(theta, mu, log_sigma)
    p_mu, p_ls = s_mu * r[:, None], s_ls * r[:, None]
    n = len(r)
    se = lambda p: p.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(p.shape[1])
    return p_mu.mean(axis=0), p_ls.mean(axis=0), se(p_mu), se(p_ls)


def _simulate_batch(gen, thetas, rng, workers):
    seeds = rng.integers(0, 2 ** 63 - 1, size=len(thetas))
    return np.asarray(simulate_many(gen, thetas, seeds, workers=workers)).reshape(len(thetas), gen.q)


def network_score(net, scaler):
    """Wrap a sigmoid-headed network as a callable on raw summaries."""
    return lambda x: nn.forward(net, scaler(np.atleast_2d(x)))[:, 0]


def avo_run(gen, x_obs, cfg, rng=None, score_fn=None):
    """Alternate discriminator training and REINFORCE proposal updates.

    With ``score_fn`` the discriminator is frozen to that callable (raw
    summaries in, scores in (0, 1) out) and never trained. Returns a
    :class:`RunResult` whose ``history`` holds the proposal mean per
    iteration and whose ``info`` holds the final mean and std.
    """
    cfg.validate()
    rng = as_generator(rng)
    box = gen.box
    x_obs = np.atleast_1d(np.asarray(x_obs, float))
    mu = box.center.copy() if cfg.init_mean is None else np.broadcast_to(
        np.asarray(cfg.init_mean, float), (box.d,)).copy()
    sigma0 = 0.25 * box.width if cfg.init_std is None else np.broadcast_to(
        np.asarray(cfg.init_std, float), (box.d,))
    log_sigma = np.log(sigma0).copy()
    _, b = value_pair(cfg.value)
    net = opt = scaler = None
    if score_fn is None:
        net = nn.mlp(gen.q, 1, tuple(cfg.hidden), output_head="sigmoid_scalar",
                     hidden_activation=cfg.activation, rng=rng)
        if cfg.clip is not None:
            net = nn.clip_weights(net, cfg.clip)
        opt = nn.AdamState.zeros_like(net)
    m = np.zeros(2 * box.d)
    v = np.zeros(2 * box.d)
    clamped = 0
    result = RunResult("avo", gen.name, None, np.empty((0, box.d)))
    trajectory = []
    t_sim = t_opt = 0.0
    for it in range(int(cfg.iterations)):
        sigma = np.exp(log_sigma)
        raw = mu + sigma * rng.standard_normal((int(cfg.batch_size), box.d))
        thetas = box.reflect(raw)
        t0 = time.perf_counter()
        fakes = _simulate_batch(gen, thetas, rng, cfg.workers)
        t1 = time.perf_counter()
        if score_fn is None:
            if scaler is None:
                scaler = Scaler.fit(fakes)
            X = scaler(np.vstack([x_obs, fakes]))
            net, opt, loss_d = train_critic(net, opt, X, int(cfg.disc_steps), cfg.disc_lr,
                                            cfg.clip, cfg.value, "logit")
            scores = network_score(net, scaler)(fakes)
        else:
            loss_d = float("nan")
            scores = np.asarray(score_fn(fakes), float).reshape(-1)
        scores = np.clip(scores, 1e-12, 1.0 - 1e-12)
        rewards = b(scores)
        base = rewards.mean() if cfg.baseline else None
        g_mu, g_ls, _, _ = reinforce_gradient(raw, rewards, mu, log_sigma, base)
        # the proposal minimises the value, i.e. descends on E[b(d(fake))]
        g = np.concatenate([g_mu, g_ls])
        t = it + 1
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        upd = cfg.lr * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        mu = mu - upd[:box.d]
        log_sigma = log_sigma - upd[box.d:]
        mu = np.clip(mu, box.lower, box.upper)
        if np.any(log_sigma < np.log(SIGMA_FLOOR)):
            clamped += 1
            log_sigma = np.maximum(log_sigma, np.log(SIGMA_FLOOR))
        t2 = time.perf_counter()
        t_sim += t1 - t0
        t_opt += t2 - t1
        trajectory.append(np.concatenate([mu, np.exp(log_sigma)]))
        result.history.append(mu[None, :].copy())
        result.diagnostics.append({"iteration": it, "loss_d": loss_d,
                                   "reward": float(rewards.mean()),
                                   "mu": mu.tolist(), "sigma": np.exp(log_sigma).tolist()})
        result.n_simulations += len(thetas)
        result.samples = thetas
    result.theta_hat = mu.copy()
    result.timings.update(simulate=t_sim, optimize=t_opt)
    result.info = {"mu": mu, "sigma": np.exp(log_sigma), "sigma_clamped": clamped,
                   "trajectory": np.asarray(trajectory)}
    result.state = {"discriminator": net, "scaler": scaler}
    return result


def near_optimal_discriminator(x_obs, eps=0.01, width=None):
    """A discriminator within ``eps/2`` of the indicator of ``{x_obs}``.

    It equals ``1 - eps/2`` at the observation and decays to ``eps/2``
    over a Gaussian bump of the given ``width`` (default: tiny relative to
    the observation's scale).
    """
    x_obs = np.atleast_1d(np.asarray(x_obs, float))
    if width is None:
        width = 1e-6 * max(1.0, float(np.max(np.abs(x_obs))))
    lo = eps / 2.0

    def score(x):
        r2 = np.sum((np.atleast_2d(x) - x_obs) ** 2, axis=1)
        return lo + (1.0 - eps) * np.exp(-0.5 * r2 / width ** 2)

    return score


def _probe_gradient(score, b, raw, fakes, mu, log_sigma):
    rewards = b(np.clip(score(fakes), 1e-12, 1.0 - 1e-12))
    g_mu, g_ls, _, _ = reinforce_gradient(raw, rewards, mu, log_sigma)
    return float(np.linalg.norm(np.concatenate([g_mu, g_ls])))


def gradient_vanishing_probe(gen, value="wasserstein", rng=None, checkpoints=(0, 10, 100, 1000),
                             n_samples=10_000, mu=None, sigma=None, x_obs=None,
                             disc_lr=1e-3, hidden=(64, 64), eps=0.01):
    """Proposal-gradient norms as a discriminator approaches optimality.

    The discriminator is trained on the observation against fakes from a
    fixed Gaussian proposal; at each checkpoint (cumulative training steps)
    the REINFORCE estimate of the proposal gradient is formed from
    ``n_samples`` draws, reusing one set of draws and simulator seeds for
    every checkpoint. A final row scores the hand-built near-optimal
    discriminator of :func:`near_optimal_discriminator`.

    Returns a list of dicts with keys ``steps``, ``distance`` (mean
    ``|d - d*|`` over the probe draws, ``d*`` being 1 at the observation and
    0 elsewhere) and ``grad_norm``.
    """
    rng = as_generator(rng)
    box = gen.box
    if gen.d != 1:
        raise ConfigError("the probe is defined for one-parameter generators")
    _, b = value_pair(value)
    mu = box.center.copy() if mu is None else np.atleast_1d(np.asarray(mu, float))
    sigma = 0.1 * box.width if sigma is None else np.atleast_1d(np.asarray(sigma, float))
    log_sigma = np.log(sigma)
    if x_obs is None:
        x_obs = gen.simulate(box.center, int(rng.integers(0, 2 ** 63 - 1)))
    x_obs = np.atleast_1d(np.asarray(x_obs, float))

    raw = mu + sigma * rng.standard_normal((n_samples, box.d))
    thetas = box.reflect(raw)
    seeds = rng.integers(0, 2 ** 63 - 1, size=n_samples)
    fakes = np.asarray(simulate_many(gen, thetas, seeds)).reshape(n_samples, gen.q)

    net = nn.mlp(gen.q, 1, tuple(hidden), output_head="sigmoid_scalar", rng=rng)
    opt = nn.AdamState.zeros_like(net)
    scaler = Scaler.fit(fakes)
    train_pool = fakes[: min(n_samples, 500)]
    X = scaler(np.vstack([x_obs, train_pool]))

    def row(steps, score):
        dist = float(np.mean(np.abs(score(fakes))))
        return {"steps": steps, "distance": dist,
                "grad_norm": _probe_gradient(score, b, raw, fakes, mu, log_sigma)}

    series = []
    done = 0
    for cp in sorted(checkpoints):
        if cp > done:
            net, opt, _ = train_critic(net, opt, X, cp - done, disc_lr, None, value, "logit")
            done = cp
        series.append(row(cp, network_score(net, scaler)))
    series.append(row("near_optimal", near_optimal_discriminator(x_obs, eps)))
    return series
