"""Small feedforward networks with hand-written backpropagation.

The discriminator and the probabilistic encoder are both instances of
:class:`Network`. Inputs may be a single vector of shape ``(d,)`` or a batch
of row vectors of shape ``(B, d)``; outputs follow the same convention.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .errors import NumericError, ShapeError, StateError

ACTIVATIONS = ("tanh", "relu")
HEADS = ("sigmoid_scalar", "shape_head")
FAMILIES = ("beta", "gaussian")

SHAPE_FLOOR = 1e-3
_OPEN_LO = np.finfo(float).tiny
_OPEN_HI = np.nextafter(1.0, 0.0)


@dataclass
class Network:
    layer_dims: list
    weights: list
    biases: list
    hidden_activation: str = "tanh"
    output_head: str = "sigmoid_scalar"
    family: str | None = None

    def __post_init__(self):
        if self.hidden_activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.hidden_activation!r}")
        if self.output_head not in HEADS:
            raise ValueError(f"unknown output head {self.output_head!r}")
        dims = list(self.layer_dims)
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ShapeError("need one weight matrix and bias vector per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise ShapeError(f"layer {i}: expected W {(dims[i + 1], dims[i])}, got {w.shape}")
        if self.output_head == "sigmoid_scalar" and dims[-1] != 1:
            raise ShapeError("sigmoid_scalar head needs a single output unit")
        if self.output_head == "shape_head":
            if self.family not in FAMILIES:
                raise ValueError(f"shape_head needs a family in {FAMILIES}")
            if dims[-1] != 2:
                raise ShapeError("shape_head emits exactly two shape parameters")
        self.layer_dims = dims

    @property
    def n_layers(self):
        return len(self.weights)

    def copy(self):
        return replace(self, weights=[w.copy() for w in self.weights],
                       biases=[b.copy() for b in self.biases])

    def parameters(self):
        """Yield every weight and bias array in layer order."""
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b


def init_network(layer_dims, *, hidden_activation="tanh", output_head="sigmoid_scalar",
                 family=None, rng=None):
    """Glorot-uniform weights and zero biases."""
    rng = np.random.default_rng(rng)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Network(list(layer_dims), weights, biases, hidden_activation, output_head, family)


def mlp(input_dim, output_dim=1, hidden=(64, 64), **kwargs):
    return init_network([input_dim, *hidden, output_dim], **kwargs)


def _act(kind, z):
    return np.tanh(z) if kind == "tanh" else np.maximum(z, 0.0)


def _act_grad(kind, z, a):
    return 1.0 - a * a if kind == "tanh" else (z > 0).astype(float)


def _head(net, raw):
    if net.output_head == "sigmoid_scalar":
        return np.clip(expit(raw), _OPEN_LO, _OPEN_HI)
    out = np.empty_like(raw)
    if net.family == "beta":
        out[:] = np.logaddexp(0.0, raw) + SHAPE_FLOOR
    else:
        out[:, 0] = raw[:, 0]
        out[:, 1] = np.logaddexp(0.0, raw[:, 1]) + SHAPE_FLOOR
    return out


def _head_grad(net, raw, out):
    if net.output_head == "sigmoid_scalar":
        return out * (1.0 - out)
    g = expit(raw)
    if net.family == "gaussian":
        g[:, 0] = 1.0
    return g


def _as_batch(net, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != net.layer_dims[0]:
        raise ShapeError(f"input has shape {x.shape}, network expects {net.layer_dims[0]} features")
    return X, single


@dataclass
class Cache:
    """Activations from a forward pass, consumed by :func:`backward`."""
    inputs: np.ndarray
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)
    raw: np.ndarray | None = None
    output: np.ndarray | None = None


def forward_cache(net, x):
    X, single = _as_batch(net, x)
    cache = Cache(inputs=X)
    a = X
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        if i < net.n_layers - 1:
            a = _act(net.hidden_activation, z)
            cache.pre.append(z)
            cache.post.append(a)
        else:
            cache.raw = z
    cache.output = _head(net, cache.raw)
    out = cache.output[0] if single else cache.output
    return out, cache


def forward(net, x, raw=False):
    """Evaluate the network; ``raw=True`` returns the pre-head values."""
    out, cache = forward_cache(net, x)
    if raw:
        return cache.raw[0] if np.ndim(x) == 1 else cache.raw
    return out


def backward(net, x, upstream, cache=None, raw=False):
    """Gradients of ``sum(upstream * forward(net, x))``.

    Returns ``(grads, dx)`` where ``grads`` is a list of ``(dW, db)`` per
    layer (summed over the batch) and ``dx`` has the shape of ``x``. With
    ``raw=True`` the upstream gradient refers to the pre-head values.
    """
    X, single = _as_batch(net, x)
    if cache is None:
        _, cache = forward_cache(net, X)
    elif cache.inputs.shape != X.shape or not np.array_equal(cache.inputs, X):
        raise StateError("cached activations were computed for a different input")
    up = np.asarray(upstream, dtype=float)
    up = up[None, :] if up.ndim == 1 else up
    if up.shape != cache.output.shape:
        raise StateError(f"upstream gradient shape {up.shape} != output shape {cache.output.shape}")

    delta = up if raw else up * _head_grad(net, cache.raw, cache.output)
    grads = [None] * net.n_layers
    for i in range(net.n_layers - 1, -1, -1):
        a_in = cache.post[i - 1] if i > 0 else cache.inputs
        grads[i] = (delta.T @ a_in, delta.sum(axis=0))
        delta = delta @ net.weights[i]
        if i > 0:
            delta = delta * _act_grad(net.hidden_activation, cache.pre[i - 1], cache.post[i - 1])
    dx = delta[0] if single else delta
    return grads, dx


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def zeros_like(cls, net):
        m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]
        v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]
        return cls(m, v, 0)


def adam_step(net, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns a new ``(net, state)`` pair."""
    if len(grads) != net.n_layers:
        raise ShapeError("one (dW, db) pair per layer is required")
    t = state.step + 1
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    new = net.copy()
    m_out, v_out = [], []
    for i, ((gw, gb), (mw, mb), (vw, vb)) in enumerate(zip(grads, state.m, state.v)):
        if gw.shape != net.weights[i].shape or gb.shape != net.biases[i].shape:
            raise ShapeError(f"gradient shape mismatch at layer {i}")
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NumericError(f"non-finite gradient in layer {i}", layer=i)
        pair_m, pair_v = [], []
        for p, g, m, v in ((new.weights[i], gw, mw, vw), (new.biases[i], gb, mb, vb)):
            m = beta1 * m + (1.0 - beta1) * g
            v = beta2 * v + (1.0 - beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
            pair_m.append(m)
            pair_v.append(v)
        m_out.append(tuple(pair_m))
        v_out.append(tuple(pair_v))
    return new, AdamState(m_out, v_out, t)


def clip_weights(net, c):
    if c <= 0:
        raise ValueError("clip constant must be positive")
    new = net.copy()
    for p in new.parameters():
        np.clip(p, -c, c, out=p)
    return new


def finite_diff_check(net, x, upstream, step=1e-5):
    """Max relative error between :func:`backward` and central differences."""
    grads, _ = backward(net, x, upstream)
    up = np.asarray(upstream, dtype=float)

    def objective(n):
        return float(np.sum(up * forward(n, x)))

    worst = 0.0
    probe = net.copy()
    for i in range(net.n_layers):
        for which, analytic in ((probe.weights[i], grads[i][0]), (probe.biases[i], grads[i][1])):
            flat = which.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + step
                f_plus = objective(probe)
                flat[j] = orig - step
                f_minus = objective(probe)
                flat[j] = orig
                numeric = (f_plus - f_minus) / (2.0 * step)
                err = abs(analytic.reshape(-1)[j] - numeric) / (abs(numeric) + 1e-8)
                worst = max(worst, err)
    return worst


def to_dict(net):
    return {
        "layer_dims": net.layer_dims,
        "hidden_activation": net.hidden_activation,
        "output_head": net.output_head,
        "family": net.family,
        "weights": [w.ravel().tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def from_dict(doc):
    dims = doc["layer_dims"]
    weights = [np.array(w, dtype=float).reshape(dims[i + 1], dims[i])
               for i, w in enumerate(doc["weights"])]
    biases = [np.array(b, dtype=float) for b in doc["biases"]]
    return Network(dims, weights, biases, doc["hidden_activation"], doc["output_head"],
                   doc.get("family"))


def save_network(net, path):
    with open(path, "w") as fh:
        json.dump(to_dict(net), fh)


def load_network(path):
    with open(path) as fh:
        return from_dict(json.load(fh))
