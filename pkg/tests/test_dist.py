import numpy as np
import pytest
from scipy import integrate

from lfi import dist
from lfi.errors import ConfigError, DomainError


def test_beta_logpdf_closed_forms():
    assert dist.beta_logpdf(0.5, 1, 1) == pytest.approx(0.0)
    assert dist.beta_logpdf(0.25, 2, 2) == pytest.approx(np.log(1.125))


def test_beta_logpdf_normalized_on_fine_grid():
    n = 10**6
    y = (np.arange(n) + 0.5) / n
    total = np.exp(dist.beta_logpdf(y, 5, 1.5)).sum() / n
    assert total == pytest.approx(1.0, abs=1e-4)
    assert np.isfinite(dist.beta_logpdf(0.9, 5, 1.5))


@pytest.mark.parametrize("args", [(0.0, 1, 1), (1.0, 1, 1), (0.5, 0, 1), (0.5, 1, -2)])
def test_beta_logpdf_domain(args):
    with pytest.raises(DomainError):
        dist.beta_logpdf(*args)


def test_gaussian_logpdf():
    assert dist.gaussian_logpdf(0, 0, 1) == pytest.approx(-0.5 * np.log(2 * np.pi))
    assert dist.gaussian_logpdf(0.4, 0.4, 0.3) == pytest.approx(-0.5 * np.log(2 * np.pi * 0.09))
    total, _ = integrate.quad(lambda z: np.exp(dist.gaussian_logpdf(z, 0.2, 0.7)), -np.inf, np.inf)
    assert total == pytest.approx(1.0, abs=1e-8)
    ref = -0.5 * ((1.3 - 0.2) / 0.7) ** 2 - np.log(0.7 * np.sqrt(2 * np.pi))
    assert dist.gaussian_logpdf(1.3, 0.2, 0.7) == pytest.approx(ref)
    with pytest.raises(DomainError):
        dist.gaussian_logpdf(0.0, 0.0, 0.0)


def test_h_transform_examples():
    v, d = dist.h_transform(dist.Transform("identity"), 0.37)
    assert (v, d) == (0.37, 1.0)
    v, _ = dist.h_transform(dist.Transform("cot_sigmoid", 0.42), 0.42)
    assert v == pytest.approx(0.0, abs=1e-12)
    assert dist.h0(0.25) == pytest.approx(-2.0)


def test_h0_matches_raw_form_and_is_antisymmetric():
    t = np.random.default_rng(0).uniform(0.01, 0.99, 1000)
    raw = -2 * np.sin(2 * np.pi * t) / (1 - np.cos(2 * np.pi * t))
    assert np.max(np.abs(dist.h0(t) - raw)) < 1e-9
    assert np.max(np.abs(dist.h0(t) + 2 / np.tan(np.pi * t))) < 1e-9
    assert np.max(np.abs(dist.h0(1 - t) + dist.h0(t))) < 1e-9


@pytest.mark.parametrize("t", [dist.Transform("identity"), dist.Transform("cot_sigmoid", 0.5),
                               dist.Transform("cot_sigmoid", 0.1)])
def test_h_monotone_and_derivative(t):
    y = np.linspace(0.01, 0.99, 1000)
    v, d = dist.h_transform(t, y)
    assert np.all(np.diff(v) > 0)
    step = 1e-6
    num = (dist.h_transform(t, y + step)[0] - dist.h_transform(t, y - step)[0]) / (2 * step)
    np.testing.assert_allclose(d, num, rtol=1e-5)


def test_transform_validation():
    with pytest.raises(DomainError):
        dist.Transform("cot_sigmoid", 1.0)
    with pytest.raises(DomainError):
        dist.Transform("logit")


def test_family_logpdf_examples():
    ident = dist.Transform("identity")
    assert dist.family_logpdf(dist.ShapeParams("beta", (1, 1)), ident, 0.5) == pytest.approx(0.0)
    # Beta(3, 2) has density 12 y^2 (1 - y).
    assert dist.family_logpdf(dist.ShapeParams("beta", (3, 2)), ident, 0.8) == \
        pytest.approx(np.log(12 * 0.8**2 * 0.2))
    y = 0.63
    cot = dist.Transform("cot_sigmoid", y)
    got = dist.family_logpdf(dist.ShapeParams("gaussian", (0, 1)), cot, y)
    assert got == pytest.approx(dist.gaussian_logpdf(0, 0, 1) + np.log(np.pi / 2))


def test_family_transform_mismatch():
    with pytest.raises(ConfigError):
        dist.family_logpdf(dist.ShapeParams("beta", (2, 2)), dist.Transform("cot_sigmoid"), 0.5)


def test_shape_params_validation():
    with pytest.raises(DomainError):
        dist.ShapeParams("beta", (0.0, 1.0))
    with pytest.raises(DomainError):
        dist.ShapeParams("gaussian", (0.0, -1.0))
    with pytest.raises(DomainError):
        dist.ShapeParams("gamma", (1.0, 1.0))


@pytest.mark.parametrize("params,t", [
    (dist.ShapeParams("beta", (2.5, 4.0)), dist.Transform("identity")),
    (dist.ShapeParams("beta", (0.8, 1.7)), dist.Transform("identity")),
    (dist.ShapeParams("gaussian", (0.3, 1.2)), dist.Transform("cot_sigmoid", 0.5)),
    (dist.ShapeParams("gaussian", (-1.0, 2.0)), dist.Transform("cot_sigmoid", 0.3)),
])
def test_family_density_normalizes_on_unit_interval(params, t):
    f = lambda y: np.exp(dist.family_logpdf(params, t, y))
    total, _ = integrate.quad(f, 0, 1, limit=200)
    # cot_sigmoid maps (0, 1) onto a finite slice of the real line, so the
    # reference mass is the family probability of that slice.
    if t.kind == "identity":
        ref = 1.0
    else:
        lo, hi = dist.h_transform(t, 0.0)[0], dist.h_transform(t, 1.0)[0]
        mu, sd = params.values
        from scipy.stats import norm
        ref = norm.cdf(hi, mu, sd) - norm.cdf(lo, mu, sd)
    assert total == pytest.approx(ref, abs=1e-3)


def test_kde_examples():
    assert dist.kde_pdf([0.0], 1.0, 0.0) == pytest.approx(1 / np.sqrt(2 * np.pi))
    a = 0.4
    vals = dist.kde_pdf([-a, a], a, np.array([-a, 0.0, a]))
    assert vals[1] >= vals.max() - 1e-15
    x = np.random.default_rng(1).standard_normal(10_000)
    assert dist.kde_pdf(x, None, 0.0) == pytest.approx(0.3989, abs=0.05)
    with pytest.raises(DomainError):
        dist.kde_pdf([], 1.0, 0.0)
    total, _ = integrate.quad(lambda v: dist.kde_pdf([0.1, 0.5, 2.0], 0.3, v), -np.inf, np.inf)
    assert total == pytest.approx(1.0, abs=1e-8)


def test_fit_beta_moments():
    x = np.random.default_rng(2).beta(2, 5, 100_000)
    a, b = dist.fit_beta_moments(x).values
    assert 1.8 <= a <= 2.2 and 4.5 <= b <= 5.5
    a, b = dist.beta_from_moments(0.5, 1 / 12).values
    assert a == pytest.approx(1.0) and b == pytest.approx(1.0)
    a, b = dist.beta_from_moments(0.3, 1e-8).values
    assert a > 1e5 and a / (a + b) == pytest.approx(0.3, abs=1e-6)
    with pytest.raises(DomainError):
        dist.fit_beta_moments([0.4, 0.4, 0.4])
    with pytest.raises(DomainError):
        dist.fit_beta_moments([0.4])


def test_family_cdf_matches_integrated_density():
    t = dist.Transform("cot_sigmoid", 0.5)
    y = 0.7
    dens, _ = integrate.quad(lambda v: np.exp(dist.family_logpdf_arrays("gaussian", 0.2, 1.5, t, v)),
                             0, y, limit=200)
    lo = dist.family_cdf("gaussian", 0.2, 1.5, t, 1e-12)
    assert dist.family_cdf("gaussian", 0.2, 1.5, t, y) - lo == pytest.approx(dens, abs=1e-6)
    assert dist.family_cdf("beta", 2.0, 3.0, dist.Transform(), 0.4) == pytest.approx(0.5248)


def test_logpdf_grad_matches_finite_difference():
    for family, s1, s2, z in [("beta", 2.2, 3.1, 0.35), ("gaussian", 0.4, 1.3, -0.2)]:
        g1, g2 = dist.family_logpdf_grad(family, s1, s2, z)
        f = (lambda a, b: dist.beta_logpdf(z, a, b)) if family == "beta" else \
            (lambda a, b: dist.gaussian_logpdf(z, a, b))
        e = 1e-6
        assert g1 == pytest.approx((f(s1 + e, s2) - f(s1 - e, s2)) / (2 * e), rel=1e-5)
        assert g2 == pytest.approx((f(s1, s2 + e) - f(s1, s2 - e)) / (2 * e), rel=1e-5)


def test_sample_mode():
    rng = np.random.default_rng(3)
    x = np.concatenate([rng.normal(0.3, 0.02, 800), rng.normal(0.8, 0.1, 200)])
    assert dist.sample_mode(x)[0] == pytest.approx(0.3, abs=0.02)
    y = rng.normal([0.2, 0.6], 0.05, size=(500, 2))
    np.testing.assert_allclose(dist.sample_mode(y), [0.2, 0.6], atol=0.05)
    np.testing.assert_array_equal(dist.sample_mode(np.full((4, 2), 0.5)), [0.5, 0.5])
