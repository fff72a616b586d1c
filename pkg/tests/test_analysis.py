import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from qhydro.analysis import (autocorrelation, convergence_order, kde, ks_critical, ks_distance,
                             silverman_bandwidth)
from qhydro.grid import integrate, make_grid


def test_ks_own_cdf():
    n = 10_000
    u = np.random.default_rng(0).random(n)
    x = stats.norm.ppf(u)
    assert ks_distance(x, stats.norm.cdf) < 1.63 / np.sqrt(n)


def test_ks_single_point_at_median():
    assert ks_distance([0.0], stats.norm.cdf) == pytest.approx(0.5, abs=1e-15)


def test_ks_exact_quantiles():
    n = 200
    q = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    assert ks_distance(q, stats.norm.cdf) == pytest.approx(0.5 / n, abs=1e-12)


def test_ks_rejects_empty():
    with pytest.raises(ValueError):
        ks_distance([], stats.norm.cdf)


def test_ks_weighted_matches_repeated():
    x = np.array([0.1, -0.4, 1.3])
    w = np.array([0.5, 0.25, 0.25])
    rep = np.array([0.1, 0.1, -0.4, 1.3])
    assert ks_distance(x, stats.norm.cdf, w) == pytest.approx(ks_distance(rep, stats.norm.cdf), abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 300))
def test_ks_monotone_reparameterization(seed, n):
    x = np.random.default_rng(seed).normal(size=n)
    a = ks_distance(x, stats.norm.cdf)
    b = ks_distance(np.exp(x), lambda y: stats.norm.cdf(np.log(y)))
    assert a == pytest.approx(b, abs=1e-12)


def test_ks_critical_value():
    assert ks_critical(10_000) == pytest.approx(0.0163)


def test_kde_standard_normal():
    x = np.random.default_rng(1).normal(size=100_000)
    g = make_grid(1024, 20.0, -10.0)
    d = kde(x, g)
    assert np.abs(d - stats.norm.pdf(g.x)).max() < 0.02


def test_kde_single_kernel():
    g = make_grid(512, 20.0, -10.0)
    d = kde([0.0], g, 1.0)
    np.testing.assert_allclose(d, stats.norm.pdf(g.x), atol=1e-12)


def test_kde_derivative_single_kernel():
    g = make_grid(512, 20.0, -10.0)
    d, s = kde([0.0], g, 1.0, derivative=True)
    np.testing.assert_allclose(s, -g.x * stats.norm.pdf(g.x), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 500), st.floats(0.05, 2.0))
def test_kde_mass_and_sign(seed, n, h):
    x = np.random.default_rng(seed).normal(size=n)
    g = make_grid(1024, 40.0, -20.0)
    d = kde(x, g, h)
    assert integrate(d, g) == pytest.approx(1.0, abs=1e-8)
    assert d.min() > -1e-12


def test_kde_rejects_zero_variance():
    with pytest.raises(ValueError):
        kde(np.ones(10), make_grid(64, 10.0, -5.0))


def test_silverman():
    x = np.random.default_rng(2).normal(size=1000)
    assert silverman_bandwidth(x) == pytest.approx(1.06 * x.std() * 1000 ** -0.2)


def test_autocorrelation_white_noise():
    u = np.random.default_rng(3).normal(size=(200, 500))
    acf = autocorrelation(u, 5)
    band = 3 / np.sqrt(u.size)
    assert acf[0] == pytest.approx(1.0, abs=3 * np.sqrt(2 / u.size))
    assert np.all(np.abs(acf[1:]) < band)


def test_autocorrelation_constant_and_alternating():
    np.testing.assert_allclose(autocorrelation(np.full((3, 20), 2.0), 4), 4.0)
    alt = np.tile((-1.0) ** np.arange(20), (2, 1))
    np.testing.assert_allclose(autocorrelation(alt, 5), (-1.0) ** np.arange(6))


def test_autocorrelation_rejects_long_lag():
    with pytest.raises(ValueError):
        autocorrelation(np.zeros((2, 5)), 5)


def test_convergence_order_examples():
    steps = [4e-3, 2e-3, 1e-3]
    assert convergence_order([1e-2, 2.5e-3, 6.25e-4], steps) == pytest.approx(2.0, abs=0.01)
    assert convergence_order([1e-3] * 3, steps) == pytest.approx(0.0, abs=1e-12)
    assert convergence_order([4e-3, 2e-3, 1e-3], steps) == pytest.approx(1.0, abs=1e-12)


def test_convergence_order_rejects():
    with pytest.raises(ValueError):
        convergence_order([1e-3, 0.0, 1e-4], [3, 2, 1])
    with pytest.raises(ValueError):
        convergence_order([1e-3, 1e-4], [2, 1])
