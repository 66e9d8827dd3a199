"""Critic training shared by ALFI and AVO.

The critic is a sigmoid-headed :class:`~lfi.nn.Network` scoring summaries
against the single observation. Two value functions are supported:

``wasserstein``
    ``V = d(x_obs) - mean d(fake)``
``vanilla``
    ``V = log d(x_obs) + mean log(1 - d(fake))``

For the Wasserstein value the objective can be placed on the sigmoid
output (``critic_loss="probability"``) or on the pre-sigmoid value
(``"logit"``); the latter keeps a useful gradient where the sigmoid
saturates.
"""
import numpy as np

from . import nn
from .errors import ConfigError, NumericError

VALUE_FUNCTIONS = ("wasserstein", "vanilla")


def value_pair(kind):
    """The increasing/decreasing pair ``(a, b)`` defining a value function."""
    if kind == "wasserstein":
        return (lambda t: t), (lambda t: -t)
    if kind == "vanilla":
        return np.log, (lambda t: np.log1p(-t))
    raise ConfigError(f"unknown value function {kind!r}")


def critic_value(out, kind):
    a, b = value_pair(kind)
    return float(a(out[0]) + np.mean(b(out[1:])))


def train_critic(net, opt, X, steps, lr, clip=None, value="wasserstein", critic_loss="logit"):
    """Run ``steps`` Adam updates maximising the value on ``X``.

    ``X`` stacks the (already scaled) observation in row 0 above the fake
    summaries. Returns ``(net, opt, loss)`` where ``loss`` is the negated
    value from the last forward pass.
    """
    n_fake = len(X) - 1
    if n_fake < 1:
        raise ConfigError("critic update needs at least one simulated summary")
    loss = None
    for _ in range(steps):
        out, cache = nn.forward_cache(net, X)
        p = out[:, 0]
        loss = -critic_value(p, value)
        if not np.isfinite(loss):
            raise NumericError("non-finite critic loss")
        up = np.empty((len(X), 1))
        if value == "vanilla":
            # gradient of -log d(real) - mean log(1 - d(fake)) w.r.t. the logit
            up[0, 0] = -(1.0 - p[0])
            up[1:, 0] = p[1:] / n_fake
            raw = True
        else:
            up[0, 0] = -1.0
            up[1:, 0] = 1.0 / n_fake
            raw = critic_loss == "logit"
        grads, _ = nn.backward(net, X, up, cache, raw=raw)
        net, opt = nn.adam_step(net, grads, opt, lr)
        if clip is not None:
            net = nn.clip_weights(net, clip)
    return net, opt, loss


class Scaler:
    """Frozen affine standardisation of summary vectors."""

    def __init__(self, shift, scale):
        self.shift = np.asarray(shift, float)
        scale = np.asarray(scale, float)
        self.scale = np.where(scale > 1e-12, scale, 1.0)

    @classmethod
    def fit(cls, X):
        X = np.atleast_2d(np.asarray(X, float))
        return cls(X.mean(axis=0), X.std(axis=0))

    @classmethod
    def identity(cls, q):
        return cls(np.zeros(q), np.ones(q))

    def __call__(self, X):
        return (np.asarray(X, float) - self.shift) / self.scale
