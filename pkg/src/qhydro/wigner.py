"""Wigner functions on a periodic phase-space lattice and their Moyal evolution.

The momentum lattice is tied to the position lattice, ``p = hbar k`` with the
spectral wavenumbers sorted increasingly, so marginals are exact sums.
Time stepping is Strang splitting between exact spectral advection in ``x``
and the force operator applied exactly in the Fourier variable conjugate to
``p``, with the odd-derivative series truncated at ``k_max``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid
from .schrodinger import Potential, WaveField, evolve

MAX_SERIES_ORDER = 2


@dataclass(frozen=True)
class PhaseSpaceGrid:
    x_grid: Grid
    hbar: float = 1.0

    @property
    def p(self) -> np.ndarray:
        return self.hbar * np.fft.fftshift(self.x_grid.wavenumbers)

    @property
    def dp(self) -> float:
        return 2.0 * np.pi * self.hbar / self.x_grid.length

    @property
    def x(self) -> np.ndarray:
        return self.x_grid.x

    @property
    def theta(self) -> np.ndarray:
        """Variable conjugate to ``p``, in rfft order along the momentum axis."""
        return 2.0 * np.pi * np.fft.rfftfreq(self.x_grid.n_points, d=self.dp)


@dataclass(frozen=True)
class WignerField:
    grid: PhaseSpaceGrid
    values: np.ndarray  # shape (n_x, n_p)
    time: float = 0.0

    def total(self) -> float:
        return float(self.values.sum() * self.grid.x_grid.spacing * self.grid.dp)

    def negativity(self) -> dict:
        """Most negative value and the phase-space volume where W < 0."""
        cell = self.grid.x_grid.spacing * self.grid.dp
        neg = self.values < 0
        return {"min": float(self.values.min()),
                "negative_volume": float(neg.sum() * cell),
                "negative_mass": float(-self.values[neg].sum() * cell)}


def _fine_samples(psi: np.ndarray) -> np.ndarray:
    """Band-limited interpolation of periodic samples onto a grid twice as fine."""
    n = psi.size
    spec = np.fft.fft(psi)
    padded = np.zeros(2 * n, dtype=complex)
    half = n // 2
    padded[:half] = spec[:half]
    padded[-half:] = spec[-half:]
    # split the Nyquist coefficient so real signals stay real
    padded[half] = 0.5 * spec[half]
    padded[-half] = 0.5 * spec[half]
    return 2.0 * np.fft.ifft(padded)


def wigner_transform(state: WaveField, return_residue: bool = False):
    """``W(x, p) = (1/2 pi hbar) int psi*(x + y/2) psi(x - y/2) exp(i p y / hbar) dy``.

    The lag ``y`` runs over one period in steps of the grid spacing; the
    half-step samples come from band-limited interpolation.
    """
    grid = state.grid
    hbar = state.constants.hbar
    n = grid.n_points
    fine = _fine_samples(state.psi)
    lags = np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)  # 0, 1, ..., -1 in FFT order
    base = 2 * np.arange(n)[:, None]
    corr = np.conj(fine[(base + lags[None, :]) % (2 * n)]) * fine[(base - lags[None, :]) % (2 * n)]
    # sum_j corr[j] exp(+2 pi i m j / n) for the momentum index m
    w = np.fft.ifft(corr, axis=1) * n
    w = np.fft.fftshift(w, axes=1) * grid.spacing / (2.0 * np.pi * hbar)
    residue = float(np.abs(w.imag).max() / max(np.abs(w.real).max(), 1e-300))
    field = WignerField(PhaseSpaceGrid(grid, hbar), np.ascontiguousarray(w.real), state.time)
    if return_residue:
        return field, residue
    return field


def marginals(W: WignerField) -> dict:
    """Position and momentum densities of ``W``."""
    return {"rho_x": W.values.sum(axis=1) * W.grid.dp,
            "rho_p": W.values.sum(axis=0) * W.grid.x_grid.spacing}


def _series_coefficients(k_max: int, hbar: float) -> list:
    """Coefficients ``(hbar/2i)^(2k) / (2k+1)!`` for ``k = 0..k_max``."""
    return [(-hbar * hbar / 4.0) ** k / math.factorial(2 * k + 1) for k in range(k_max + 1)]


def _check_order(k_max: int):
    if not 0 <= k_max <= MAX_SERIES_ORDER:
        raise ValueError(f"k_max must be in 0..{MAX_SERIES_ORDER} (derivative cache bound)")


def force_generator(W_grid: PhaseSpaceGrid, U: Potential, k_max: int) -> np.ndarray:
    """Symbol of the force operator in (x, theta) space, shape ``(n_x, n_theta)``.

    ``sum_k c_k U^(2k+1)(x) (i theta)^(2k+1)``; purely imaginary, so its
    exponential is a phase and total probability is conserved exactly.
    """
    _check_order(k_max)
    theta = W_grid.theta
    coeffs = _series_coefficients(k_max, W_grid.hbar)
    gen = np.zeros((W_grid.x_grid.n_points, theta.size), dtype=complex)
    for k, c in enumerate(coeffs):
        order = 2 * k + 1
        gen += c * U.derivative(order)[:, None] * (1j * theta[None, :]) ** order
    return gen


def quantum_term(W: WignerField, U: Potential, k_max: int) -> np.ndarray:
    """Series part of the force term, ``sum_{k>=1} c_k U^(2k+1) d_p^(2k+1) W``."""
    _check_order(k_max)
    theta = W.grid.theta
    coeffs = _series_coefficients(k_max, W.grid.hbar)
    spec = np.fft.rfft(W.values, axis=1)
    out = np.zeros_like(spec)
    for k in range(1, k_max + 1):
        order = 2 * k + 1
        out += coeffs[k] * U.derivative(order)[:, None] * (1j * theta[None, :]) ** order * spec
    n = W.values.shape[1]
    return np.fft.irfft(out, n=n, axis=1)


class MoyalPropagator:
    """Strang step: half advection in x, full force step in p, half advection."""

    def __init__(self, W_grid: PhaseSpaceGrid, U: Potential, dt: float, k_max: int,
                 mass: float = 1.0, max_dt: float | None = None):
        _check_order(k_max)
        if not dt > 0:
            raise ValueError("dt must be positive")
        if max_dt is not None and dt > max_dt:
            raise ValueError(f"dt={dt} exceeds the configured stability bound {max_dt}")
        self.grid = W_grid
        self.dt = dt
        kx = 2.0 * np.pi * np.fft.rfftfreq(W_grid.x_grid.n_points, d=W_grid.x_grid.spacing)
        # W(x, p) -> W(x - p dt / 2m, p)
        self.half_drift = np.exp(-0.5j * dt * kx[:, None] * W_grid.p[None, :] / mass)
        self.full_drift = self.half_drift**2
        self.kick = np.exp(dt * force_generator(W_grid, U, k_max))

    @staticmethod
    def _drift(w, phase):
        n = w.shape[0]
        return np.fft.irfft(np.fft.rfft(w, axis=0) * phase, n=n, axis=0)

    def _force(self, w):
        n = w.shape[1]
        return np.fft.irfft(np.fft.rfft(w, axis=1) * self.kick, n=n, axis=1)

    def __call__(self, w: np.ndarray) -> np.ndarray:
        return self._drift(self._force(self._drift(w, self.half_drift)), self.half_drift)


def moyal_step(W: WignerField, U: Potential, dt: float, k_max: int, mass: float = 1.0,
               max_dt: float | None = None) -> WignerField:
    prop = MoyalPropagator(W.grid, U, dt, k_max, mass, max_dt)
    return WignerField(W.grid, prop(W.values), W.time + dt)


def moyal_evolve(W: WignerField, U: Potential, dt: float, n_steps: int, k_max: int,
                 mass: float = 1.0, max_dt: float | None = None) -> WignerField:
    """``n_steps`` Strang steps with adjacent half drifts merged."""
    prop = MoyalPropagator(W.grid, U, dt, k_max, mass, max_dt)
    if n_steps == 0:
        return W
    w = prop._drift(W.values, prop.half_drift)
    for i in range(n_steps):
        w = prop._force(w)
        w = prop._drift(w, prop.half_drift if i == n_steps - 1 else prop.full_drift)
    return WignerField(W.grid, w, W.time + n_steps * dt)


def crosscheck(state0: WaveField, U: Potential, t_final: float, dt: float, k_max: int) -> dict:
    """Relative sup difference between Moyal-evolved W and the transform of evolved psi.

    Returns ``{"error", "moyal", "reference"}`` so callers can export both fields.
    """
    n_steps = int(round(t_final / dt))
    if n_steps < 1 or abs(n_steps * dt - t_final) > 1e-9 * max(t_final, 1.0):
        raise ValueError("t_final must be a positive multiple of dt")
    W0 = wigner_transform(state0)
    moyal = moyal_evolve(W0, U, dt, n_steps, k_max, state0.constants.mass)
    psi_t = evolve(state0, U, dt, n_steps, every=n_steps, check_dt=False)[-1]
    reference = wigner_transform(psi_t)
    scale = np.abs(reference.values).max()
    error = float(np.abs(moyal.values - reference.values).max() / scale)
    return {"error": error, "moyal": moyal, "reference": reference}
