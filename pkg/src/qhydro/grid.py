"""Uniform periodic grids, spectral derivatives, quadrature and interpolation.

Every field in the package lives on one of these grids.  Two-particle fields
use a pair of grids (one per axis) and pass ``axis`` to the operators.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Periodic lattice ``x_j = origin + j * spacing`` for ``j = 0..n_points-1``."""

    n_points: int
    length: float
    origin: float
    spacing: float = field(init=False)
    x: np.ndarray = field(init=False, repr=False, compare=False)
    wavenumbers: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not is_power_of_two(self.n_points):
            raise ValueError(f"n_points must be a power of two, got {self.n_points}")
        if not (np.isfinite(self.length) and self.length > 0):
            raise ValueError(f"length must be positive, got {self.length}")
        spacing = self.length / self.n_points
        x = self.origin + spacing * np.arange(self.n_points)
        k = 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=spacing)
        x.flags.writeable = False
        k.flags.writeable = False
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "wavenumbers", k)

    @property
    def end(self) -> float:
        return self.origin + self.length

    def wrap(self, x):
        """Map positions into ``[origin, origin + length)``."""
        return self.origin + np.mod(np.asarray(x, dtype=float) - self.origin, self.length)


def make_grid(n_points: int, length: float, origin: float = 0.0) -> Grid:
    return Grid(int(n_points) if isinstance(n_points, (int, np.integer)) else n_points,
                float(length), float(origin))


def spectral_derivative(f, grid: Grid, order: int = 1, axis: int = -1):
    """Order-th derivative of periodic samples along ``axis`` by FFT.

    Real input goes through the real transform, so the result is real by
    construction.  For odd orders the Nyquist mode contributes nothing.
    """
    if order < 1 or int(order) != order:
        raise ValueError(f"order must be a positive integer, got {order}")
    f = np.asarray(f)
    if f.shape[axis] != grid.n_points:
        raise ValueError("field length does not match grid")
    axis = axis % f.ndim
    n = grid.n_points
    shape = [1] * f.ndim
    if np.isrealobj(f):
        k = 2.0 * np.pi * np.fft.rfftfreq(n, d=grid.spacing)
        if order % 2 == 1:
            k[-1] = 0.0
        shape[axis] = k.size
        multiplier = ((1j * k) ** order).reshape(shape)
        return np.fft.irfft(np.fft.rfft(f, axis=axis) * multiplier, n=n, axis=axis)
    k = grid.wavenumbers.copy()
    if order % 2 == 1:
        k[n // 2] = 0.0
    shape[axis] = n
    multiplier = ((1j * k) ** order).reshape(shape)
    return np.fft.ifft(np.fft.fft(f, axis=axis) * multiplier, axis=axis)


def integrate(f, grid: Grid, axis: int | None = None):
    """Rectangle rule on the periodic lattice (identical to the trapezoid rule)."""
    f = np.asarray(f)
    if axis is None:
        return grid.spacing * np.sum(f)
    return grid.spacing * np.sum(f, axis=axis)


def interpolate(f, grid: Grid, x):
    """Four-point Lagrange cubic interpolation of periodic samples.

    Uses nodes ``j-1, j, j+1, j+2`` around the cell containing ``x``; exact at
    nodes and for cubics, error O(spacing**4).  ``x`` may be a scalar or array
    and is wrapped periodically.  ``f`` may carry leading batch axes; the last
    axis is the grid axis.
    """
    f = np.asarray(f)
    xq = np.asarray(x, dtype=float)
    s = (xq - grid.origin) / grid.spacing
    s = np.mod(s, grid.n_points)
    j = np.floor(s).astype(np.int64)
    t = s - j
    # np.mod can return exactly n_points for tiny negative inputs
    over = j >= grid.n_points
    j = np.where(over, 0, j)
    t = np.where(over, 0.0, t)
    n = grid.n_points
    fm1 = f[..., (j - 1) % n]
    f0 = f[..., j]
    f1 = f[..., (j + 1) % n]
    f2 = f[..., (j + 2) % n]
    wm1 = -t * (t - 1.0) * (t - 2.0) / 6.0
    w0 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
    w1 = -(t + 1.0) * t * (t - 2.0) / 2.0
    w2 = (t + 1.0) * t * (t - 1.0) / 6.0
    out = wm1 * fm1 + w0 * f0 + w1 * f1 + w2 * f2
    if np.ndim(out) == 0:
        return float(out)
    return out


def periodic_cdf(rho, grid: Grid):
    """Nodes and values of the piecewise-linear CDF of a density on one period.

    The last cell wraps to ``origin + length``.  Returns ``(nodes, cdf)`` with
    ``cdf[0] == 0`` and ``cdf[-1] == 1``.
    """
    rho = np.asarray(rho, dtype=float)
    closed = np.append(rho, rho[0])
    nodes = grid.origin + grid.spacing * np.arange(grid.n_points + 1)
    cells = 0.5 * (closed[1:] + closed[:-1]) * grid.spacing
    cdf = np.concatenate(([0.0], np.cumsum(cells)))
    total = cdf[-1]
    if not total > 0:
        raise ValueError("density has no mass")
    return nodes, cdf / total
