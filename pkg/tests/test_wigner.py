import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qhydro.analysis import convergence_order
from qhydro.schrodinger import (PhysicalConstants, WaveField, evolve, free, gaussian, harmonic,
                                harmonic_eigenstate, quartic)
from qhydro.wigner import (PhaseSpaceGrid, crosscheck, marginals, moyal_evolve, moyal_step,
                           quantum_term, wigner_transform)


def test_phase_space_lattice(grid):
    ps = PhaseSpaceGrid(grid)
    assert ps.p.size == grid.n_points
    assert np.all(np.diff(ps.p) > 0)
    assert ps.dp == pytest.approx(2 * np.pi / grid.length)


def test_ground_state_wigner(grid):
    W, residue = wigner_transform(harmonic_eigenstate(grid, 0), return_residue=True)
    X, P = np.meshgrid(W.grid.x, W.grid.p, indexing="ij")
    assert np.abs(W.values - np.exp(-X**2 - P**2) / np.pi).max() < 1e-6
    assert W.values.min() > -1e-12
    assert residue < 1e-10
    assert W.total() == pytest.approx(1.0, abs=1e-6)


def test_first_excited_negative_origin(grid):
    W = wigner_transform(harmonic_eigenstate(grid, 1))
    i = int(np.argmin(np.abs(W.grid.x)))
    j = int(np.argmin(np.abs(W.grid.p)))
    assert W.values[i, j] == pytest.approx(-1 / np.pi, abs=1e-4)
    neg = W.negativity()
    assert neg["min"] < 0 and neg["negative_volume"] > 0


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.floats(-4, 4), st.floats(-2, 2), st.floats(0.5, 1.5),
                          st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=3))
def test_x_marginal_is_density(coarse, packets):
    psi = sum((a + 1j * b) * gaussian(coarse, x0, p0, s).psi for x0, p0, s, a, b in packets)
    if np.abs(psi).max() < 1e-3:
        return
    psi = psi / np.sqrt(np.sum(np.abs(psi) ** 2) * coarse.spacing)
    state = WaveField((coarse,), psi, PhysicalConstants())
    W = wigner_transform(state)
    assert np.abs(marginals(W)["rho_x"] - state.density).max() < 1e-8


def test_ground_marginal_variance(grid):
    W = wigner_transform(harmonic_eigenstate(grid, 0))
    rho = marginals(W)["rho_x"]
    assert np.sum(rho) * grid.spacing == pytest.approx(1.0, abs=1e-6)
    assert np.sum(grid.x**2 * rho) * grid.spacing == pytest.approx(0.5, abs=1e-6)


def test_boosted_momentum_marginal(grid):
    W = wigner_transform(gaussian(grid, 0, 2.0, 1.0))
    rho_p = marginals(W)["rho_p"]
    assert np.sum(rho_p) * W.grid.dp == pytest.approx(1.0, abs=1e-6)
    assert np.sum(W.grid.p * rho_p) * W.grid.dp == pytest.approx(2.0, abs=1e-6)


def test_quadratic_series_terminates(coarse):
    W = wigner_transform(gaussian(coarse, 1.0, 0.5, 0.8))
    U = harmonic(coarse)
    a = moyal_evolve(W, U, 1e-3, 200, 0)
    b = moyal_evolve(W, U, 1e-3, 200, 2)
    assert np.abs(a.values - b.values).max() < 1e-12


def test_quartic_series_terminates(coarse):
    W = wigner_transform(gaussian(coarse, 1.0, 0.0, 1.0))
    U = quartic(coarse, 0.1)
    a = moyal_evolve(W, U, 1e-3, 200, 1)
    b = moyal_evolve(W, U, 1e-3, 200, 2)
    assert np.abs(a.values - b.values).max() < 1e-12


def test_free_marginal_spreading(coarse):
    W = moyal_evolve(wigner_transform(gaussian(coarse)), free(coarse), 1e-3, 500, 0)
    rho = marginals(W)["rho_x"]
    var = np.sum(coarse.x**2 * rho) * coarse.spacing
    assert var == pytest.approx(1 + 0.25**2, abs=1e-5)
    psi = evolve(gaussian(coarse), free(coarse), 1e-3, 500, every=500)[-1]
    assert np.abs(W.values - wigner_transform(psi).values).max() < 1e-10


def test_normalization_per_step(coarse):
    W = wigner_transform(gaussian(coarse, 1.0, 0.0, 1.0))
    after = moyal_step(W, quartic(coarse, 0.1), 1e-3, 2)
    assert abs(after.total() - W.total()) < 1e-10


def test_quantum_term_has_zero_p_integral(coarse):
    W = wigner_transform(gaussian(coarse, 1.0, 0.3, 1.0))
    for U in (quartic(coarse, 0.1), quartic(coarse, 0.1, -1.0)):
        term = quantum_term(W, U, 2)
        assert np.abs(term).max() > 1e-6
        assert np.abs(term.sum(axis=1) * W.grid.dp).max() < 1e-10


def test_rejects_series_order_and_dt(coarse):
    W = wigner_transform(gaussian(coarse))
    with pytest.raises(ValueError, match="k_max"):
        moyal_step(W, free(coarse), 1e-3, 3)
    with pytest.raises(ValueError, match="stability"):
        moyal_step(W, free(coarse), 1e-2, 0, max_dt=1e-3)


def test_crosscheck_harmonic_coherent(coarse):
    r = crosscheck(gaussian(coarse, 2.0, 0, np.sqrt(0.5)), harmonic(coarse), 1.0, 1e-3, 0)
    assert r["error"] < 1e-4


def test_crosscheck_free_any_order(coarse):
    for k in (0, 1, 2):
        assert crosscheck(gaussian(coarse), free(coarse), 0.5, 1e-3, k)["error"] < 1e-6


def test_crosscheck_quartic(coarse):
    U = quartic(coarse, 0.1)
    s = gaussian(coarse, 1.0, 0, 1.0)
    quantum = crosscheck(s, U, 0.5, 1e-3, 1)["error"]
    classical = crosscheck(s, U, 0.5, 1e-3, 0)["error"]
    assert quantum < 1e-3
    assert classical >= 10 * quantum


def test_crosscheck_quartic_refinement(grid):
    # needs the default spacing: at n=256, L=40 a grid floor of 4e-5 hides the dt^2 term
    U = quartic(grid, 0.1)
    s = gaussian(grid, 1.0, 0, 1.0)
    steps = [4e-3, 2e-3, 1e-3]
    errs = [crosscheck(s, U, 0.2, dt, 1)["error"] for dt in steps]
    assert convergence_order(errs, steps) >= 1.9
