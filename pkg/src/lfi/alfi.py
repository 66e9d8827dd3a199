"""Adversarial likelihood-free inference.

Each outer iteration advances an ensemble of Metropolis-Hastings particles
under the current surrogate likelihood, runs the simulator once per
particle, then trains

* a discriminator ``d`` that scores the observation against the simulated
  summaries with the Wasserstein objective ``-d(x_obs) + mean d(fake)``, and
* a probabilistic encoder ``s(theta)`` that fits the shape parameters of a
  beta (or Gaussian) law to the transformed scores ``h(d(g(theta, u)))``
  by maximum likelihood.

The surrogate likelihood of ``theta`` is the fitted density at
``h(d(x_obs))``; with a uniform prior its ratio between two parameters is
the MH acceptance probability.
"""
from __future__ import annotations

import logging
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dist, nn
from .adversarial import train_critic
from .errors import ConfigError, LfiError, NumericError, SimulationError
from .results import RunResult, dump_json
from .rng import stream
from .sim import simulate_many

log = logging.getLogger(__name__)


@dataclass
class AlfiConfig:
    t_outer: int = 100
    m_inner: int = 5
    l_updates: int = 20
    encoder_updates: int | None = 80
    n_particles: int = 100
    proposal_step: object = None
    family: str = "beta"
    disc_lr: float = 3e-3
    enc_lr: float = 3e-3
    clip: float = 0.1
    critic_loss: str = "logit"
    hidden: tuple = (64, 64)
    disc_activation: str = "relu"
    batch_size: int = 128
    mode_window: int = 10
    seed: int = 0
    workers: int | None = None

    def validate(self, box=None):
        for name in ("t_outer", "m_inner", "l_updates", "n_particles", "batch_size", "mode_window"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.encoder_updates is not None and int(self.encoder_updates) < 1:
            raise ConfigError("encoder_updates must be at least 1")
        if self.family not in ("beta", "gaussian"):
            raise ConfigError(f"family must be 'beta' or 'gaussian', got {self.family!r}")
        if self.disc_activation not in nn.ACTIVATIONS:
            raise ConfigError(f"disc_activation must be one of {nn.ACTIVATIONS}")
        if self.critic_loss not in ("logit", "probability"):
            raise ConfigError("critic_loss must be 'logit' or 'probability'")
        if self.clip is not None and self.clip <= 0:
            raise ConfigError("clip constant must be positive")
        if box is not None:
            step = self.step_for(box)
            if np.any(step <= 0):
                raise ConfigError("proposal_step must be positive in every coordinate")

    def step_for(self, box):
        if self.proposal_step is None:
            return 0.05 * box.width
        return np.broadcast_to(np.asarray(self.proposal_step, float), (box.d,)).copy()

    @classmethod
    def from_dict(cls, doc):
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown ALFI options: {sorted(unknown)}")
        doc = dict(doc)
        if "hidden" in doc:
            doc["hidden"] = tuple(doc["hidden"])
        return cls(**doc)


@dataclass
class AlfiState:
    discriminator: nn.Network
    encoder: nn.Network
    particles: np.ndarray
    x_obs: np.ndarray
    box: object
    family: str
    d_obs: float = 0.5
    iteration: int = 0
    disc_opt: nn.AdamState | None = None
    enc_opt: nn.AdamState | None = None
    x_shift: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    replay_theta: list = field(default_factory=list)
    replay_x: list = field(default_factory=list)
    particle_rngs: list = field(default_factory=list)
    boundary_hits: int = 0

    def __post_init__(self):
        if self.disc_opt is None:
            self.disc_opt = nn.AdamState.zeros_like(self.discriminator)
        if self.enc_opt is None:
            self.enc_opt = nn.AdamState.zeros_like(self.encoder)
        q = self.x_obs.size
        if self.x_shift is None:
            self.x_shift = np.zeros(q)
        if self.x_scale is None:
            self.x_scale = np.ones(q)

    @property
    def n(self):
        return len(self.particles)

    @property
    def transform(self):
        return dist.default_transform(self.family, self.d_obs)

    def replay_arrays(self):
        if not self.replay_theta:
            return np.empty((0, self.box.d)), np.empty((0, self.x_obs.size))
        return np.asarray(self.replay_theta), np.asarray(self.replay_x)

    def save(self, out_dir):
        nn.save_network(self.discriminator, os.path.join(out_dir, "discriminator.json"))
        nn.save_network(self.encoder, os.path.join(out_dir, "encoder.json"))
        dump_json({"family": self.family, "d_obs": self.d_obs, "iteration": self.iteration,
                   "x_obs": self.x_obs, "x_shift": self.x_shift, "x_scale": self.x_scale,
                   "lower": self.box.lower, "upper": self.box.upper},
                  os.path.join(out_dir, "alfi_state.json"))


def init_state(config, gen, x_obs):
    config.validate(gen.box)
    x_obs = np.atleast_1d(np.asarray(x_obs, float))
    if x_obs.shape != (gen.q,):
        raise ConfigError(f"observation has length {x_obs.size}, generator emits {gen.q}")
    hidden = tuple(config.hidden)
    disc = nn.mlp(gen.q, 1, hidden, output_head="sigmoid_scalar",
                  hidden_activation=config.disc_activation,
                  rng=stream(config.seed, "alfi", "init", "discriminator"))
    if config.clip is not None:
        disc = nn.clip_weights(disc, config.clip)
    enc = nn.mlp(gen.d, 2, hidden, output_head="shape_head", family=config.family,
                 rng=stream(config.seed, "alfi", "init", "encoder"))
    particles = gen.box.uniform(stream(config.seed, "alfi", "init", "particles"), config.n_particles)
    rngs = [stream(config.seed, "alfi", "particle", i) for i in range(config.n_particles)]
    state = AlfiState(disc, enc, particles, x_obs, gen.box, config.family, particle_rngs=rngs)
    refresh_d_obs(state)
    return state


def _scale_inputs(state, x):
    return (np.asarray(x, float) - state.x_shift) / state.x_scale


def discriminate(state, x):
    """Discriminator score of raw summaries (vector or batch of rows)."""
    x = np.asarray(x, float)
    out = nn.forward(state.discriminator, _scale_inputs(state, x))
    return out[..., 0]


def refresh_d_obs(state):
    state.d_obs = float(dist.clamp_unit(discriminate(state, state.x_obs)))
    return state.d_obs


def _encoder_inputs(state, thetas):
    return 2.0 * state.box.to_unit(np.atleast_2d(thetas)) - 1.0


def encode(state, thetas):
    """Shape parameters ``s(theta)`` for a batch of parameters, shape (B, 2)."""
    return nn.forward(state.encoder, _encoder_inputs(state, thetas))


def log_surrogate(state, thetas, jacobian=True):
    """Surrogate log-likelihood at each row of ``thetas``."""
    shapes = encode(state, thetas)
    lp = dist.family_logpdf_arrays(state.family, shapes[:, 0], shapes[:, 1], state.transform,
                                   state.d_obs, jacobian=jacobian)
    if not np.all(np.isfinite(lp)):
        bad = shapes[~np.isfinite(lp)]
        raise NumericError("non-finite surrogate log-likelihood", shapes=bad)
    return lp


def estimate_loglik(state, theta):
    """log p(x_obs | theta) under the current networks."""
    theta = np.asarray(theta, float)
    lp = log_surrogate(state, np.atleast_2d(theta))
    return float(lp[0]) if theta.ndim <= 1 else lp


def mh_propose(theta, step, rng, box):
    """Gaussian random-walk proposal reflected at the box faces (symmetric)."""
    theta = np.asarray(theta, float)
    return box.reflect(theta + np.asarray(step, float) * rng.standard_normal(theta.shape))


def acceptance_ratio(theta_new, theta, state):
    lp = log_surrogate(state, np.vstack([np.atleast_1d(theta_new), np.atleast_1d(theta)]),
                       jacobian=False)
    return float(min(1.0, np.exp(lp[0] - lp[1])))


def mh_sweep(state, m, step, jacobian=False):
    """Advance every particle by ``m`` MH steps under frozen networks.

    Proposals and acceptance uniforms come from each particle's own stream.
    Returns the fraction of accepted proposals.
    """
    n, d = state.particles.shape
    cur = state.particles.copy()
    lp_cur = log_surrogate(state, cur, jacobian=jacobian)
    accepted = 0
    for _ in range(m):
        prop = np.empty_like(cur)
        u = np.empty(n)
        for i, r in enumerate(state.particle_rngs):
            prop[i] = mh_propose(cur[i], step, r, state.box)
            u[i] = r.random()
        lp_prop = log_surrogate(state, prop, jacobian=jacobian)
        accept = np.log(u) < lp_prop - lp_cur
        cur[accept] = prop[accept]
        lp_cur[accept] = lp_prop[accept]
        accepted += int(accept.sum())
    state.particles = cur
    return accepted / (n * m)


def evaluate_particles(state, gen, seeds, workers=None):
    """Simulate once per particle; successful pairs are appended to the replay.

    Returns ``(thetas, summaries, ok)`` where ``ok`` flags the particles whose
    simulation succeeded.
    """
    thetas = state.particles.copy()
    outs = simulate_many(gen, thetas, seeds, workers=workers, raise_errors=False)
    ok = np.array([not isinstance(o, SimulationError) for o in outs])
    for i in np.flatnonzero(~ok):
        log.warning("simulation failed at particle %d theta=%s: %s", i, thetas[i], outs[i])
    summaries = np.array([o for o in outs if not isinstance(o, SimulationError)]).reshape(-1, gen.q)
    state.replay_theta.extend(thetas[ok])
    state.replay_x.extend(summaries)
    return thetas[ok], summaries, ok


def set_input_scaling(state, summaries):
    """Freeze the discriminator's input standardisation from a batch of summaries."""
    summaries = np.asarray(summaries, float)
    state.x_shift = summaries.mean(axis=0)
    scale = summaries.std(axis=0)
    state.x_scale = np.where(scale > 1e-12, scale, 1.0)
    refresh_d_obs(state)


def discriminator_loss(state, fakes):
    return float(-discriminate(state, state.x_obs) + np.mean(discriminate(state, fakes)))


def discriminator_update(state, fakes, l, lr, clip, critic_loss="logit"):
    """``l`` Adam steps on the Wasserstein objective, clipping weights after each.

    With ``critic_loss="probability"`` the objective is ``-d(x_obs) + mean
    d(fake)`` on the sigmoid output; with ``"logit"`` it is applied to the
    pre-sigmoid critic value. The returned loss is the probability-scale
    value from the last step's forward pass.
    """
    fakes = np.atleast_2d(np.asarray(fakes, float))
    if len(fakes) == 0:
        raise ConfigError("discriminator update needs at least one simulated summary")
    X = _scale_inputs(state, np.vstack([state.x_obs, fakes]))
    state.discriminator, state.disc_opt, loss = train_critic(
        state.discriminator, state.disc_opt, X, l, lr, clip, "wasserstein", critic_loss)
    refresh_d_obs(state)
    return loss


def encoder_targets(state, summaries):
    """Transformed discriminator scores ``h(d(x))`` used as encoder targets."""
    y = discriminate(state, summaries)
    clamped = dist.clamp_unit(y)
    hits = int(np.count_nonzero(clamped != y))
    z, _ = dist.h_transform(state.transform, clamped)
    return np.atleast_1d(z), hits


def encoder_nll(state, thetas, z):
    shapes = encode(state, thetas)
    z_lp = (dist.beta_logpdf(z, shapes[:, 0], shapes[:, 1]) if state.family == "beta"
            else dist.gaussian_logpdf(z, shapes[:, 0], shapes[:, 1]))
    return float(-np.mean(z_lp))


def encoder_update(state, thetas, summaries, l, lr, rng, batch_size=128):
    """``l`` Adam steps on the negative log-likelihood of the encoder.

    Targets are computed once from the current discriminator, which stays
    fixed throughout.
    """
    thetas = np.atleast_2d(np.asarray(thetas, float))
    if len(thetas) == 0:
        raise ConfigError("encoder update needs a non-empty batch")
    z, hits = encoder_targets(state, summaries)
    state.boundary_hits += hits
    inputs = _encoder_inputs(state, thetas)
    n = len(inputs)
    loss = None
    for _ in range(l):
        idx = rng.choice(n, size=batch_size, replace=False) if n > batch_size else np.arange(n)
        xb, zb = inputs[idx], z[idx]
        shapes, cache = nn.forward_cache(state.encoder, xb)
        s1, s2 = shapes[:, 0], shapes[:, 1]
        lp = (dist.beta_logpdf(zb, s1, s2) if state.family == "beta"
              else dist.gaussian_logpdf(zb, s1, s2))
        loss = float(-np.mean(lp))
        if not np.isfinite(loss):
            raise NumericError("non-finite encoder loss", shapes=shapes)
        g1, g2 = dist.family_logpdf_grad(state.family, s1, s2, zb)
        upstream = -np.stack([g1, g2], axis=1) / len(idx)
        grads, _ = nn.backward(state.encoder, xb, upstream, cache)
        state.encoder, state.enc_opt = nn.adam_step(state.encoder, grads, state.enc_opt, lr)
    return loss


def posterior_mode(state, candidates):
    """Candidate with the highest surrogate log-likelihood (first on ties)."""
    candidates = np.atleast_2d(np.asarray(candidates, float))
    lp = log_surrogate(state, candidates)
    return candidates[int(np.argmax(lp))].copy()


class RunAborted(LfiError):
    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


def run(config, gen, x_obs, callback=None):
    """Full ALFI loop; returns a :class:`RunResult` carrying the final state."""
    state = init_state(config, gen, x_obs)
    step = config.step_for(gen.box)
    seed_rng = stream(config.seed, "alfi", "simulation-seeds")
    batch_rng = stream(config.seed, "alfi", "minibatch")
    result = RunResult("alfi-" + config.family, gen.name, None, state.particles.copy(),
                       state=state, info={"config": _config_doc(config)})
    timings = result.timings
    try:
        for t in range(config.t_outer):
            t0 = time.perf_counter()
            acc = mh_sweep(state, config.m_inner, step)
            t1 = time.perf_counter()
            seeds = seed_rng.integers(0, 2 ** 63 - 1, size=state.n)
            before = state.particles.copy()
            thetas, fakes, ok = evaluate_particles(state, gen, seeds, config.workers)
            result.n_simulations += state.n
            if not ok.all():
                state.particles[~ok] = before[~ok]
            t2 = time.perf_counter()
            if t == 0:
                set_input_scaling(state, fakes)
            loss_d = loss_s = float("nan")
            if len(fakes):
                loss_d = discriminator_update(state, fakes, config.l_updates, config.disc_lr,
                                              config.clip, config.critic_loss)
                rt, rx = state.replay_arrays()
                l_enc = config.l_updates if config.encoder_updates is None else config.encoder_updates
                loss_s = encoder_update(state, rt, rx, l_enc, config.enc_lr,
                                        batch_rng, config.batch_size)
            t3 = time.perf_counter()
            timings["sample"] += t1 - t0
            timings["simulate"] += t2 - t1
            timings["optimize"] += t3 - t2
            state.iteration = t + 1
            result.history.append(state.particles.copy())
            result.diagnostics.append({
                "iteration": t, "acceptance_rate": acc, "loss_d": loss_d, "loss_s": loss_s,
                "d_obs": state.d_obs, "failed": int((~ok).sum()),
            })
            if callback is not None:
                callback(state, result)
    except Exception as exc:
        result.samples = state.particles.copy()
        raise RunAborted(f"ALFI aborted at iteration {state.iteration}: {exc}", result) from exc
    result.samples = state.particles.copy()
    window = result.history[-config.mode_window:]
    result.theta_hat = posterior_mode(state, np.vstack(window))
    result.info["boundary_hits"] = state.boundary_hits
    result.info["d_obs"] = state.d_obs
    return result


def _config_doc(config):
    doc = asdict(config)
    doc["hidden"] = list(doc["hidden"])
    if doc["proposal_step"] is not None:
        doc["proposal_step"] = np.asarray(doc["proposal_step"], float).tolist()
    return doc


def load_state(run_dir):
    """Rebuild an :class:`AlfiState` (networks and scaling) from a run directory."""
    import json

    from .sim import Box

    with open(os.path.join(run_dir, "alfi_state.json")) as fh:
        doc = json.load(fh)
    disc = nn.load_network(os.path.join(run_dir, "discriminator.json"))
    enc = nn.load_network(os.path.join(run_dir, "encoder.json"))
    box = Box(doc["lower"], doc["upper"])
    state = AlfiState(disc, enc, np.empty((0, box.d)), np.asarray(doc["x_obs"], float), box,
                      doc["family"], d_obs=doc["d_obs"], iteration=doc["iteration"],
                      x_shift=np.asarray(doc["x_shift"], float),
                      x_scale=np.asarray(doc["x_scale"], float))
    return state
