"""Shared statistics for the verification suites."""
from __future__ import annotations

import numpy as np

from .grid import Grid, integrate


def ks_distance(values, cdf, weights=None) -> float:
    """Sup distance between the empirical CDF of ``values`` and ``cdf``.

    ``cdf`` is any vectorized monotone callable.  Both one-sided gaps are
    checked at every sample point.  Optional ``weights`` (nonnegative, summing
    to one) give a weighted empirical CDF.
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("sample is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    order = np.argsort(x, kind="stable")
    x = x[order]
    if weights is None:
        n = x.size
        upper = np.arange(1, n + 1) / n
        lower = np.arange(0, n) / n
    else:
        w = np.asarray(weights, dtype=float).ravel()[order]
        if np.any(w < 0) or not np.isclose(w.sum(), 1.0):
            raise ValueError("weights must be nonnegative and sum to one")
        upper = np.cumsum(w)
        lower = upper - w
    F = np.asarray(cdf(x), dtype=float)
    return float(max(np.max(upper - F), np.max(F - lower)))


def ks_critical(n: int, level: float = 0.99) -> float:
    """Asymptotic one-sample KS critical value (1.63/sqrt(n) at 99%)."""
    coeff = {0.95: 1.36, 0.99: 1.63}[level]
    return coeff / np.sqrt(n)


def silverman_bandwidth(values) -> float:
    x = np.asarray(values, dtype=float)
    std = np.std(x)
    if not std > 0:
        raise ValueError("zero-variance sample: automatic bandwidth undefined")
    return 1.06 * std * x.size ** (-0.2)


def _binned(values, grid: Grid, weights=None) -> np.ndarray:
    """Linear binning of (optionally weighted) samples onto the periodic grid nodes."""
    s = np.mod((np.asarray(values, dtype=float) - grid.origin) / grid.spacing, grid.n_points)
    j = np.floor(s).astype(np.int64)
    t = s - j
    j %= grid.n_points
    n = grid.n_points
    w = 1.0 if weights is None else np.asarray(weights, dtype=float)
    counts = np.bincount(j, weights=(1.0 - t) * w, minlength=n)
    counts += np.bincount((j + 1) % n, weights=t * w, minlength=n)
    return counts


def kde(values, grid: Grid, bandwidth: float | None = None, derivative: bool = False,
        weights=None):
    """Gaussian kernel density estimate on ``grid`` (normalized to one).

    Samples are linearly binned and convolved with the kernel by FFT, so the
    grid must cover the sample with room for a few bandwidths on each side.
    With ``derivative=True`` returns ``(density, d density / dx)``.

    Per-sample ``weights`` (e.g. velocities, for a flux density) are smoothed
    with the same kernel and share the unweighted normalization.
    """
    if bandwidth is None:
        bandwidth = silverman_bandwidth(values)
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    counts = _binned(values, grid, weights)
    # kernel sampled in real space (periodized), so the estimate is nonnegative
    # even when the bandwidth is comparable to the spacing
    offset = grid.spacing * np.fft.fftfreq(grid.n_points, d=1.0 / grid.n_points)
    images = offset[:, None] + grid.length * np.arange(-2, 3)[None, :]
    gauss = np.exp(-0.5 * (images / bandwidth) ** 2)
    kernel = gauss.sum(axis=1)
    counts_hat = np.fft.fft(counts)
    density = np.fft.ifft(counts_hat * np.fft.fft(kernel)).real
    norm = integrate(kernel, grid)
    mass = integrate(density, grid) if weights is None else np.size(values) * norm
    density = density / mass
    if not derivative:
        return density
    dkernel = (-images / bandwidth**2 * gauss).sum(axis=1)
    slope = np.fft.ifft(counts_hat * np.fft.fft(dkernel)).real / mass
    return density, slope


def autocorrelation(series, max_lag: int) -> np.ndarray:
    """``<u(t) u(t + lag)>`` averaged over paths and time origins, lag = 0..max_lag.

    ``series`` has shape ``(n_paths, n_times)`` (a 1D array is one path).
    """
    u = np.atleast_2d(np.asarray(series, dtype=float))
    n_times = u.shape[1]
    if max_lag >= n_times or max_lag < 0:
        raise ValueError(f"max_lag must be in [0, {n_times - 1}]")
    out = np.empty(max_lag + 1)
    for lag in range(max_lag + 1):
        out[lag] = np.mean(u[:, : n_times - lag] * u[:, lag:])
    return out


def convergence_order(errors, steps) -> float:
    """Least-squares slope of log(error) against log(step)."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(steps, dtype=float)
    if e.size < 3 or e.size != h.size:
        raise ValueError("need at least three (step, error) pairs")
    if np.any(e <= 0) or np.any(h <= 0):
        raise ValueError("errors and steps must be positive")
    slope, _ = np.polyfit(np.log(h), np.log(e), 1)
    return float(slope)
