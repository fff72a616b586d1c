"""Polar (Madelung) decomposition of wavefunctions and hydrodynamic residuals.

``rho_floor`` is relative throughout: points with ``rho < rho_floor * max(rho)``
are masked out.  Masked points carry 0.0 in every field and are excluded from
residual norms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import Grid, integrate, spectral_derivative
from .schrodinger import PhysicalConstants, Potential, WaveField

DEFAULT_RHO_FLOOR = 1e-8
SCALE_GUARD = 1e-12
# below this every force term is roundoff (e.g. a plane wave), so report absolute
FORCE_SCALE_GUARD = 1e-8


@dataclass(frozen=True)
class MadelungFields:
    """Hydrodynamic fields of one snapshot.

    ``current`` is the probability current (defined everywhere, no mask).
    ``grad_V`` and ``grad_Q`` are computed by the quotient rule from smooth
    spectral derivatives so that they never differentiate a masked field.
    One-particle only: ``S``, ``V``, ``current``, ``grad_V`` and ``grad_Q``;
    they are None for two-particle snapshots.
    """

    grids: tuple
    rho: np.ndarray
    Q: np.ndarray
    mask: np.ndarray
    time: float
    constants: PhysicalConstants
    rho_floor: float
    S: np.ndarray | None = None
    V: np.ndarray | None = None
    current: np.ndarray | None = None
    grad_V: np.ndarray | None = None
    grad_Q: np.ndarray | None = None

    @property
    def grid(self) -> Grid:
        if len(self.grids) != 1:
            raise ValueError("grid is only defined for one-particle fields")
        return self.grids[0]

    @property
    def ndim(self) -> int:
        return len(self.grids)


def density_mask(rho, rho_floor: float = DEFAULT_RHO_FLOOR):
    rho = np.asarray(rho)
    if not rho_floor > 0:
        raise ValueError("rho_floor must be positive")
    return rho >= rho_floor * rho.max()


def _laplacian(f, grids):
    return sum(spectral_derivative(f, g, 2, axis=i) for i, g in enumerate(grids))


def _amplitude(rho, mask):
    amp = np.sqrt(np.clip(rho, 0.0, None))
    # regularized denominator; masked points are discarded anyway
    floor = amp[mask].min()
    return amp, np.maximum(amp, floor)


def _regularized(rho, mask):
    return np.maximum(rho, rho[mask].min())


def quantum_potential(rho, grids, constants=PhysicalConstants(), rho_floor=DEFAULT_RHO_FLOOR):
    """``Q = -hbar^2 lap(sqrt rho) / (2 m sqrt rho)``, zero where masked.

    Density-only form, suitable for nodeless densities.  ``grids`` is a Grid
    or a tuple of grids (one per axis of ``rho``).
    """
    grids = (grids,) if isinstance(grids, Grid) else tuple(grids)
    rho = np.asarray(rho, dtype=float)
    mask = density_mask(rho, rho_floor)
    amp, amp_reg = _amplitude(rho, mask)
    Q = -constants.hbar**2 * _laplacian(amp, grids) / (2.0 * constants.mass * amp_reg)
    return np.where(mask, Q, 0.0)


def _largest_run(mask: np.ndarray) -> slice:
    labels, count = ndimage.label(mask)
    if count == 0:
        raise ValueError("masked region is empty")
    sizes = ndimage.sum_labels(mask, labels, index=np.arange(1, count + 1))
    best = int(np.argmax(sizes)) + 1
    idx = np.flatnonzero(labels == best)
    return slice(idx[0], idx[-1] + 1)


def decompose(state: WaveField, rho_floor: float = DEFAULT_RHO_FLOOR) -> MadelungFields:
    """Split ``psi`` into density, velocity, velocity potential and quantum potential.

    The velocity comes from the probability current, so no phase unwrapping is
    needed.  ``S`` is the running integral of ``m V`` over the largest
    contiguous unmasked run, starting from 0 at its left end.
    """
    psi = state.psi
    rho = np.abs(psi) ** 2
    mask = density_mask(rho, rho_floor)
    if not mask.any():
        raise ValueError("masked region is empty")
    c = state.constants
    hbar, m = c.hbar, c.mass
    if state.ndim == 2:
        Q = quantum_potential(rho, state.grids, c, rho_floor)
        return MadelungFields(state.grids, rho, Q, mask, state.time, c, rho_floor)

    grid = state.grid
    # logarithmic derivatives psi^(k)/psi stay smooth through near-nodes,
    # where |psi| has kinks that spectral derivatives would ring on
    inv = np.conj(psi) / _regularized(rho, mask)
    d1, d2, d3 = (spectral_derivative(psi, grid, k) for k in (1, 2, 3))
    u1, u2, u3 = d1 * inv, d2 * inv, d3 * inv
    scale = -hbar**2 / (2 * m)
    Q = np.where(mask, scale * (u2.real + u1.imag**2), 0.0)
    grad_Q = np.where(mask, scale * ((u3 - u2 * u1).real
                                     + 2 * u1.imag * (u2 - u1 * u1).imag), 0.0)

    current = hbar * np.imag(np.conj(psi) * d1) / m
    V = np.where(mask, hbar * u1.imag / m, 0.0)
    grad_V = np.where(mask, hbar * (u2 - u1 * u1).imag / m, 0.0)

    run = _largest_run(mask)
    S = np.zeros_like(rho)
    mv = m * V[run]
    S[run] = np.concatenate(([0.0], np.cumsum(0.5 * (mv[1:] + mv[:-1]) * grid.spacing)))
    return MadelungFields((grid,), rho, Q, mask, state.time, c, rho_floor,
                          S=S, V=V, current=current, grad_V=grad_V, grad_Q=grad_Q)


def _check_triple(a, b, c):
    for f in (a, c):
        if f.grids != b.grids or f.rho.shape != b.rho.shape:
            raise ValueError("snapshots live on different grids")
    if b.ndim != 1:
        raise ValueError("residuals are one-particle only")


def _normalized(residual, scale, guard=SCALE_GUARD):
    if scale < guard:
        return float(residual)
    return float(residual / scale)


def continuity_residual(before: MadelungFields, now: MadelungFields, after: MadelungFields,
                        dt: float) -> float:
    """Normalized max of ``d_t rho + d_x (rho V)`` over the unmasked points of ``now``.

    Falls back to the absolute residual when ``d_t rho`` is below 1e-12.
    """
    _check_triple(before, now, after)
    mask = now.mask
    drho_dt = (after.rho - before.rho) / (2.0 * dt)
    div = spectral_derivative(now.current, now.grid, 1)
    res = np.abs(drho_dt + div)[mask].max()
    return _normalized(res, np.abs(drho_dt)[mask].max())


def force_balance_terms(before, now, after, U: Potential, dt: float) -> dict:
    """Individual terms of ``m dV/dt + m V dV/dx + d(U + Q)/dx`` on the common mask."""
    _check_triple(before, now, after)
    m = now.constants.mass
    mask = before.mask & now.mask & after.mask
    return {
        "mask": mask,
        "acceleration": m * (after.V - before.V) / (2.0 * dt),
        "advection": m * now.V * now.grad_V,
        "potential_force": U.derivative(1),
        "quantum_force": now.grad_Q,
    }


def force_balance_residual(before, now, after, U: Potential, dt: float) -> float:
    """Normalized max of the force-balance residual.

    The scale is the largest single term, so a state whose classical and
    quantum forces cancel (a stationary state) is still judged against the
    size of those forces.  When every term is below 1e-8 the absolute
    residual is returned instead.
    """
    terms = force_balance_terms(before, now, after, U, dt)
    mask = terms.pop("mask")
    total = sum(terms.values())
    res = np.abs(total)[mask].max()
    scale = max(np.abs(t)[mask].max() for t in terms.values())
    return _normalized(res, scale, FORCE_SCALE_GUARD)


def mean_q_vs_fisher(rho, grid: Grid, constants=PhysicalConstants(),
                     rho_floor=DEFAULT_RHO_FLOOR) -> dict:
    """``<Q>`` and the scaled Fisher information ``hbar^2/(8m) int (rho')^2/rho``."""
    rho = np.asarray(rho, dtype=float)
    mask = density_mask(rho, rho_floor)
    Q = quantum_potential(rho, grid, constants, rho_floor)
    drho = spectral_derivative(rho, grid, 1)
    fisher = np.where(mask, drho**2 / np.where(mask, rho, 1.0), 0.0)
    mean_q = integrate(np.where(mask, rho * Q, 0.0), grid)
    scaled = constants.hbar**2 / (8.0 * constants.mass) * integrate(fisher, grid)
    return {"mean_q": float(mean_q), "fisher_scaled": float(scaled)}


def mixed_derivative_q(fields: MadelungFields) -> np.ndarray:
    """``d^2 Q / dx1 dx2`` on the mask, from smooth derivatives of ``sqrt rho``."""
    if fields.ndim != 2:
        raise ValueError("mixed derivative needs two-particle fields")
    g1, g2 = fields.grids
    c = fields.constants
    mask = fields.mask
    amp, a = _amplitude(fields.rho, mask)
    lap = _laplacian(amp, fields.grids)

    def d(f, i, j):
        if i:
            f = spectral_derivative(f, g1, i, axis=0)
        if j:
            f = spectral_derivative(f, g2, j, axis=1)
        return f

    a1, a2, a12 = d(amp, 1, 0), d(amp, 0, 1), d(amp, 1, 1)
    L1, L2, L12 = d(lap, 1, 0), d(lap, 0, 1), d(lap, 1, 1)
    # d1 d2 (L / a) by the quotient rule
    mixed = (L12 / a - (L1 * a2 + L2 * a1 + lap * a12) / a**2 + 2 * lap * a1 * a2 / a**3)
    return np.where(mask, -c.hbar**2 / (2 * c.mass) * mixed, 0.0)


def q_separability(fields: MadelungFields) -> float:
    """Sup norm of ``d^2 Q / dx1 dx2``; zero exactly when Q is additively separable.

    Raises if the mask splits the density into disconnected pieces, because the
    coupling between them would then be silently dropped.
    """
    if fields.ndim != 2:
        raise ValueError("q_separability needs two-particle fields")
    _, pieces = ndimage.label(fields.mask)
    if pieces != 1:
        raise ValueError(f"rho_floor splits the density into {pieces} disconnected regions; "
                         "cross terms are not resolved")
    return float(np.abs(mixed_derivative_q(fields))[fields.mask].max())
