import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qhydro.grid import integrate, interpolate, make_grid, periodic_cdf, spectral_derivative

from conftest import band_limited


def test_make_grid_small():
    g = make_grid(8, 8.0, -4.0)
    assert g.spacing == 1.0
    np.testing.assert_array_equal(g.x, np.arange(-4.0, 4.0))


def test_wavenumbers_transform_order():
    g = make_grid(4, 2 * np.pi, 0.0)
    np.testing.assert_allclose(np.abs(g.wavenumbers), [0, 1, 2, 1], atol=1e-14)
    assert g.wavenumbers[0] == 0 and g.wavenumbers[1] == pytest.approx(1) \
        and g.wavenumbers[3] == pytest.approx(-1)


@pytest.mark.parametrize("n,length", [(6, 1.0), (0, 1.0), (8, 0.0), (8, -2.0)])
def test_make_grid_rejects(n, length):
    with pytest.raises(ValueError):
        make_grid(n, length, 0.0)


def test_spacing_times_points(grid):
    assert grid.spacing * grid.n_points == pytest.approx(grid.length, rel=1e-15)


def test_derivative_of_sine(grid):
    L = grid.length
    f = np.sin(2 * np.pi * grid.x / L)
    d = spectral_derivative(f, grid, 1)
    exact = 2 * np.pi / L * np.cos(2 * np.pi * grid.x / L)
    assert np.abs(d - exact).max() / np.abs(exact).max() < 1e-10


@pytest.mark.parametrize("order", [1, 2, 3, 5])
def test_derivative_of_constant(grid, order):
    assert np.abs(spectral_derivative(np.full(grid.n_points, 3.7), grid, order)).max() < 1e-12


def test_plane_wave_eigenfunction(grid):
    k = grid.wavenumbers[7]
    f = np.exp(1j * k * grid.x)
    np.testing.assert_allclose(spectral_derivative(f, grid, 2), -k * k * f, atol=1e-10)


def test_linearity(grid):
    f, g = band_limited(grid, 1), band_limited(grid, 2)
    a, b = 0.3, -2.1
    lhs = spectral_derivative(a * f + b * g, grid, 1)
    rhs = a * spectral_derivative(f, grid, 1) + b * spectral_derivative(g, grid, 1)
    assert np.abs(lhs - rhs).max() / np.abs(rhs).max() < 1e-12


def test_composition(grid):
    f = band_limited(grid, 3)
    dd = spectral_derivative(spectral_derivative(f, grid, 1), grid, 1)
    d2 = spectral_derivative(f, grid, 2)
    assert np.abs(dd - d2).max() / np.abs(d2).max() < 1e-10


def test_derivative_integrates_to_zero(grid):
    f = band_limited(grid, 4)
    assert abs(integrate(spectral_derivative(f, grid, 1), grid)) < 1e-10


def test_derivative_axis_two_d():
    g1, g2 = make_grid(32, 2 * np.pi, 0), make_grid(64, 2 * np.pi, 0)
    f = np.sin(g1.x)[:, None] * np.cos(2 * g2.x)[None, :]
    d = spectral_derivative(f, g2, 1, axis=1)
    np.testing.assert_allclose(d, -2 * np.sin(g1.x)[:, None] * np.sin(2 * g2.x)[None, :], atol=1e-12)


def test_integrate_constant():
    g = make_grid(64, 10.0, 0.0)
    assert integrate(np.ones(64), g) == pytest.approx(10.0, rel=1e-15)


def test_integrate_sine(grid):
    assert abs(integrate(np.sin(2 * np.pi * grid.x / grid.length), grid)) < 1e-12


def test_integrate_gaussian(grid):
    rho = np.exp(-grid.x**2 / 2) / np.sqrt(2 * np.pi)
    assert integrate(rho, grid) == pytest.approx(1.0, abs=1e-10)


def test_interpolate_nodes_exact(grid):
    f = band_limited(grid, 5)
    assert np.array_equal(interpolate(f, grid, grid.x), f)


def test_interpolate_fourth_order():
    errs = []
    for n in (64, 128, 256):
        g = make_grid(n, 2 * np.pi, 0.0)
        xm = g.x + 0.5 * g.spacing
        errs.append(np.abs(interpolate(np.sin(g.x), g, xm) - np.sin(xm)).max())
    order = np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])
    assert min(order) > 3.8


def test_interpolate_wraps(grid):
    f = band_limited(grid, 6)
    a = interpolate(f, grid, grid.origin + grid.length + 0.5 * grid.spacing)
    b = interpolate(f, grid, grid.origin + 0.5 * grid.spacing)
    assert a == pytest.approx(b, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.integers(1, 60),
       st.floats(0.0, 0.999))
def test_interpolate_reproduces_cubics(coeffs, j, t):
    g = make_grid(64, 16.0, -8.0)
    poly = np.polynomial.Polynomial(coeffs)
    f = np.zeros(64)
    idx = np.arange(j - 1, j + 3)
    f[idx] = poly(g.x[idx])
    xq = g.x[j] + t * g.spacing
    assert interpolate(f, g, xq) == pytest.approx(poly(xq), abs=1e-12 * (1 + np.abs(coeffs).sum() * 512))


def test_periodic_cdf_endpoints(grid):
    nodes, cdf = periodic_cdf(np.exp(-grid.x**2), grid)
    assert cdf[0] == 0 and cdf[-1] == 1
    assert nodes[-1] == pytest.approx(grid.end)
    assert np.all(np.diff(cdf) >= 0)
