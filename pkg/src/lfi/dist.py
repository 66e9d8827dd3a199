"""Parametric families for the pushed-forward discriminator score.

The discriminator maps a summary to ``y`` in (0, 1). A monotone transform
``h`` carries ``y`` onto the support of a parametric family (identity for
the beta family, a cotangent-of-sigmoid map onto the real line for the
Gaussian family), and the likelihood at ``y`` is the family density at
``h(y)`` times ``|h'(y)|``.

Functions accept scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import ConfigError, DomainError

Y_CLAMP = 1e-6
T_CLAMP = 1e-7
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class ShapeParams:
    family: str
    values: tuple

    def __post_init__(self):
        if self.family not in ("beta", "gaussian"):
            raise DomainError(f"unsupported family {self.family!r}")
        if len(self.values) != 2:
            raise DomainError("both families take exactly two shape parameters")
        a, b = self.values
        if self.family == "beta" and not (a > 0 and b > 0):
            raise DomainError(f"beta shapes must be positive, got {self.values}")
        if self.family == "gaussian" and not b > 0:
            raise DomainError(f"gaussian scale must be positive, got {b}")


@dataclass(frozen=True)
class Transform:
    kind: str = "identity"
    center: float = 0.5

    def __post_init__(self):
        if self.kind not in ("identity", "cot_sigmoid"):
            raise DomainError(f"unknown transform {self.kind!r}")
        if self.kind == "cot_sigmoid" and not 0.0 < self.center < 1.0:
            raise DomainError("cot_sigmoid center must lie strictly inside (0, 1)")


def default_transform(family, center=0.5):
    return Transform("identity") if family == "beta" else Transform("cot_sigmoid", center)


def beta_logpdf(y, a, b):
    y, a, b = np.asarray(y, float), np.asarray(a, float), np.asarray(b, float)
    if np.any((y <= 0) | (y >= 1)):
        raise DomainError("beta density needs y strictly inside (0, 1)")
    if np.any((a <= 0) | (b <= 0)):
        raise DomainError("beta shapes must be positive")
    out = (a - 1) * np.log(y) + (b - 1) * np.log1p(-y) - special.betaln(a, b)
    return out[()] if out.ndim == 0 else out


def gaussian_logpdf(z, mu, sigma):
    sigma = np.asarray(sigma, float)
    if np.any(sigma <= 0):
        raise DomainError("gaussian scale must be positive")
    r = (np.asarray(z, float) - mu) / sigma
    out = -0.5 * r * r - np.log(sigma) - 0.5 * _LOG_2PI
    return out[()] if np.ndim(out) == 0 else out


def h0(t):
    """Cotangent map (0, 1) -> R, equal to -2 sin(2 pi t) / (1 - cos(2 pi t))."""
    return -2.0 / np.tan(np.pi * np.asarray(t, float))


def h0_prime(t):
    return 2.0 * np.pi / np.sin(np.pi * np.asarray(t, float)) ** 2


def h_transform(t, y):
    """Return ``(h(y), h'(y))`` for transform ``t``."""
    y = np.asarray(y, float)
    if t.kind == "identity":
        return y[()], np.ones_like(y)[()]
    s = special.expit(y - t.center)
    if np.any((s <= 0) | (s >= 1)):
        raise DomainError("sigmoid saturated; transform is singular")
    s = np.clip(s, T_CLAMP, 1.0 - T_CLAMP)
    value = h0(s)
    deriv = h0_prime(s) * s * (1.0 - s)
    return value[()], deriv[()]


def clamp_unit(y):
    return np.clip(y, Y_CLAMP, 1.0 - Y_CLAMP)


def _check_pair(family, transform):
    if family == "beta" and transform.kind != "identity":
        raise ConfigError("beta family is defined on (0, 1) and pairs with the identity transform")


def family_logpdf(params, transform, y):
    """log f(h(y); shapes) + log|h'(y)| for a :class:`ShapeParams`."""
    return family_logpdf_arrays(params.family, params.values[0], params.values[1], transform, y)


def family_logpdf_arrays(family, s1, s2, transform, y, jacobian=True):
    """Vectorised :func:`family_logpdf` over arrays of shape parameters."""
    _check_pair(family, transform)
    z, dz = h_transform(transform, y)
    if family == "beta":
        lp = beta_logpdf(z, s1, s2)
    else:
        lp = gaussian_logpdf(z, s1, s2)
    return lp + np.log(np.abs(dz)) if jacobian else lp


def family_logpdf_grad(family, s1, s2, z):
    """Gradient of log f(z; s1, s2) with respect to the two shape parameters."""
    s1, s2, z = np.asarray(s1, float), np.asarray(s2, float), np.asarray(z, float)
    if family == "beta":
        dab = special.digamma(s1 + s2)
        return np.log(z) - special.digamma(s1) + dab, np.log1p(-z) - special.digamma(s2) + dab
    r = (z - s1) / s2
    return r / s2, (r * r - 1.0) / s2


def family_cdf(family, s1, s2, transform, y):
    """CDF of the transformed score, expressed on the y scale."""
    z, _ = h_transform(transform, y)
    if family == "beta":
        return special.betainc(s1, s2, z)
    return special.ndtr((z - s1) / s2)


def silverman_bandwidth(sample):
    x = np.asarray(sample, float)
    n = x.size
    sd = x.std(ddof=1) if n > 1 else 0.0
    iqr = np.subtract(*np.percentile(x, [75, 25])) / 1.349 if n > 1 else 0.0
    spread = min(sd, iqr) if iqr > 0 else sd
    if spread <= 0:
        spread = 1.0
    return 0.9 * spread * n ** (-0.2)


def kde_pdf(sample, bandwidth, x):
    """Gaussian kernel density estimate of ``sample`` evaluated at ``x``."""
    sample = np.asarray(sample, float).ravel()
    if sample.size == 0:
        raise DomainError("kernel density estimate needs a non-empty sample")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(sample)
    if bandwidth <= 0:
        raise DomainError("bandwidth must be positive")
    x = np.asarray(x, float)
    u = (x[..., None] - sample) / bandwidth
    dens = np.exp(-0.5 * u * u).sum(axis=-1) / (sample.size * bandwidth * np.sqrt(2 * np.pi))
    return dens[()] if dens.ndim == 0 else dens


def beta_from_moments(mean, var):
    if not 0 < mean < 1:
        raise DomainError("beta mean must lie in (0, 1)")
    if not 0 < var < mean * (1 - mean):
        raise DomainError("variance is degenerate for a beta distribution")
    common = mean * (1 - mean) / var - 1.0
    return ShapeParams("beta", (mean * common, (1 - mean) * common))


def fit_beta_moments(sample):
    """Method-of-moments beta fit."""
    x = np.asarray(sample, float).ravel()
    if x.size < 2:
        raise DomainError("need at least two values")
    if np.any((x <= 0) | (x >= 1)):
        raise DomainError("sample must lie strictly inside (0, 1)")
    var = x.var(ddof=1)
    if var <= 1e-12 * max(x.mean() * (1 - x.mean()), 1e-300) or np.ptp(x) == 0:
        raise DomainError("sample variance is zero")
    return beta_from_moments(x.mean(), var)


def sample_mode(samples, weights=None, max_points=2000, grid=512):
    """Highest-density point of a (weighted) sample under a Gaussian KDE.

    One-dimensional samples are scored on a regular grid; in higher
    dimensions the candidates are the sample points themselves. Large
    samples are thinned to ``max_points`` evenly spaced rows first.
    """
    x = np.asarray(samples, float)
    x = x[:, None] if x.ndim == 1 else x
    if len(x) == 0:
        raise DomainError("mode of an empty sample is undefined")
    w = None if weights is None else np.asarray(weights, float)
    if len(x) > max_points:
        idx = np.linspace(0, len(x) - 1, max_points).astype(int)
        x = x[idx]
        w = None if w is None else w[idx]
    if len(x) < 3 or np.all(np.ptp(x, axis=0) <= 0):
        return (x if w is None else x[np.argsort(-w, kind="stable")])[0].copy()
    try:
        kde = stats.gaussian_kde(x.T, weights=w)
    except np.linalg.LinAlgError:
        return x.mean(axis=0) if w is None else np.average(x, axis=0, weights=w)
    if x.shape[1] == 1:
        pts = np.linspace(x.min(), x.max(), grid)
        return np.array([pts[int(np.argmax(kde(pts)))]])
    return x[int(np.argmax(kde(x.T)))].copy()
