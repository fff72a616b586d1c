"""Underdamped Langevin ensembles and their deterministic mean-field counterpart.

``langevin_evolve`` integrates ``m R'' + b R' = -U'(R) + f_L`` with
Euler-Maruyama and counter-based noise.  ``meanfield_evolve`` replaces the
random force by ``-k_B T d ln(rho)/dx`` evaluated from a kernel density
estimate of the ensemble itself, which keeps the density right while freezing
the individual paths.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .analysis import autocorrelation, kde, ks_distance, silverman_bandwidth
from .grid import interpolate, make_grid
from .schrodinger import Potential

MIN_MEANFIELD_PATHS = 1000


@dataclass(frozen=True)
class LangevinParams:
    mass: float = 1.0
    friction: float = 1.0
    kT: float = 1.0
    dt: float = 0.01
    n_paths: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not (self.mass > 0 and self.friction > 0 and self.dt > 0):
            raise ValueError("mass, friction and dt must be positive")
        if self.kT < 0:
            raise ValueError("kT must be nonnegative")
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")

    @property
    def noise_amplitude(self) -> float:
        """Standard deviation of the momentum kick per step, ``sqrt(2 b kT dt)``."""
        return float(np.sqrt(2.0 * self.friction * self.kT * self.dt))


@dataclass(frozen=True)
class BrownianEnsemble:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    params: LangevinParams

    @property
    def n_paths(self) -> int:
        return self.positions.shape[0]

    def index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"no stored sample at t={t}")
        return i


def fastest_period(U: Potential, x_region, mass: float) -> float:
    """Shortest small-oscillation period over ``x_region`` (inf if nowhere confining)."""
    curvature = np.max(U.evaluate(np.asarray(x_region, dtype=float), 2))
    if curvature <= 0:
        return np.inf
    return 2.0 * np.pi / np.sqrt(curvature / mass)


def _accessible_region(U: Potential, x0, kT: float) -> np.ndarray:
    x = U.grid.x
    u = U.values
    ceiling = max(np.max(U.evaluate(np.asarray(x0, dtype=float))), u.min()) + 20.0 * kT
    region = x[u <= ceiling]
    return region if region.size else np.asarray(x0, dtype=float)


def check_timestep(U: Potential, params: LangevinParams, x0):
    limit = 0.1 * min(params.mass / params.friction,
                      fastest_period(U, _accessible_region(U, x0, params.kT), params.mass))
    if params.dt > limit:
        raise ValueError(f"dt={params.dt} exceeds the stability bound {limit:.3g}")


def _split(n: int, workers: int) -> list:
    """Even-aligned chunk boundaries (keeps every chunk on Philox block pairs)."""
    if workers <= 1 or n < 4 * workers:
        return [(0, n)]
    bounds = (np.linspace(0, n, workers + 1) // 2 * 2).astype(int)
    bounds[-1] = n
    return [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]


def langevin_evolve(U: Potential, params: LangevinParams, positions, velocities=None,
                    t_final: float = 1.0, record_every: int = 1, workers: int = 1,
                    ) -> BrownianEnsemble:
    """Euler-Maruyama for ``dR = V dt``, ``m dV = (-U'(R) - b V) dt + sqrt(2 b kT) dW``.

    The Gaussian increment of path ``i`` at step ``n`` is addressed by
    ``(seed, n, i)``, so ``workers`` changes wall time but not a single bit.
    """
    x0 = np.broadcast_to(np.asarray(positions, dtype=float), (params.n_paths,)).copy()
    v0 = np.zeros_like(x0) if velocities is None else \
        np.broadcast_to(np.asarray(velocities, dtype=float), x0.shape).copy()
    check_timestep(U, params, x0)
    n_steps = int(round(t_final / params.dt))
    if n_steps < 1:
        raise ValueError("t_final must cover at least one step")
    m, b, dt = params.mass, params.friction, params.dt
    kick = params.noise_amplitude / m
    n_rec = n_steps // record_every + 1

    def run(lo, hi):
        x, v = x0[lo:hi].copy(), v0[lo:hi].copy()
        xs = np.empty((hi - lo, n_rec))
        vs = np.empty((hi - lo, n_rec))
        xs[:, 0], vs[:, 0] = x, v
        for step in range(1, n_steps + 1):
            accel = (-U.evaluate(x, 1) - b * v) / m
            x_new = x + v * dt
            v = v + accel * dt
            if kick:
                v = v + kick * rng.normals(params.seed, step, lo, hi - lo)
            x = x_new
            if step % record_every == 0:
                xs[:, step // record_every] = x
                vs[:, step // record_every] = v
        return xs, vs

    chunks = _split(params.n_paths, workers)
    if len(chunks) == 1:
        xs, vs = run(*chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: run(*c), chunks))
        xs = np.concatenate([p[0] for p in parts])
        vs = np.concatenate([p[1] for p in parts])
    times = dt * record_every * np.arange(n_rec)
    return BrownianEnsemble(times, xs, vs, params)


def boltzmann_cdf(U: Potential, kT: float):
    """Normalized CDF of ``exp(-U/kT)`` by cumulative trapezoid on a dense grid."""
    if not kT > 0:
        raise ValueError("Boltzmann distribution needs kT > 0")
    half = 1.0
    u_min = np.min(U.evaluate(np.linspace(-half, half, 201)))
    while True:
        x = np.linspace(-half, half, 4001)
        u = U.evaluate(x)
        u_min = min(u_min, u.min())
        if min(u[0], u[-1]) - u_min > 60.0 * kT:
            break
        half *= 2.0
        if half > 1e6:
            raise ValueError("potential is not confining; no Boltzmann distribution")
    x = np.linspace(-half, half, 200_001)
    weight = np.exp(-(U.evaluate(x) - u_min) / kT)
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (weight[1:] + weight[:-1]) * np.diff(x))))
    cdf /= cdf[-1]
    return lambda q: np.interp(q, x, cdf)


def boltzmann_distance(ensemble: BrownianEnsemble, U: Potential, at_time: float) -> float:
    """KS distance between positions at ``at_time`` and the Boltzmann distribution."""
    x = ensemble.positions[:, ensemble.index(at_time)]
    return ks_distance(x, boltzmann_cdf(U, ensemble.params.kT))


def _kde_grid(x, bandwidth: float):
    lo = x.min() - 10.0 * bandwidth
    hi = x.max() + 10.0 * bandwidth
    n = 256
    while (hi - lo) / n > bandwidth / 8.0 and n < 16384:
        n *= 2
    return make_grid(n, hi - lo, lo)


def log_density_gradient(x, bandwidth: float) -> np.ndarray:
    """``d ln(rho_hat)/dx`` at the sample points for a Gaussian KDE of the samples."""
    grid = _kde_grid(x, bandwidth)
    density, slope = kde(x, grid, bandwidth, derivative=True)
    rho = interpolate(density, grid, x)
    if np.any(rho <= np.finfo(float).tiny):
        raise FloatingPointError("kernel density underflowed at a particle position")
    return interpolate(slope, grid, x) / rho


def meanfield_evolve(U: Potential, params: LangevinParams, positions, t_final: float = 1.0,
                     record_every: int = 1, bandwidth_scale: float = 1.0, velocities=None,
                     ) -> BrownianEnsemble:
    """Deterministic ``m R'' + b R' = -U'(R) - kT d ln(rho_hat)/dx`` by velocity Verlet.

    ``rho_hat`` is rebuilt every step from the current positions with the
    Silverman bandwidth times ``bandwidth_scale``.  At ``kT = 0`` no density is
    needed and the method is plain damped Newtonian dynamics.
    """
    x = np.broadcast_to(np.asarray(positions, dtype=float), (params.n_paths,)).copy()
    if params.n_paths < MIN_MEANFIELD_PATHS:
        raise ValueError(f"mean-field closure needs at least {MIN_MEANFIELD_PATHS} paths")
    v = np.zeros_like(x) if velocities is None else \
        np.broadcast_to(np.asarray(velocities, dtype=float), x.shape).copy()
    check_timestep(U, params, x)
    m, b, kT, dt = params.mass, params.friction, params.kT, params.dt
    n_steps = int(round(t_final / dt))

    def force(pos):
        f = -U.evaluate(pos, 1)
        if kT > 0:
            h = bandwidth_scale * silverman_bandwidth(pos)
            f = f - kT * log_density_gradient(pos, h)
        return f

    n_rec = n_steps // record_every + 1
    xs = np.empty((x.size, n_rec))
    vs = np.empty((x.size, n_rec))
    xs[:, 0], vs[:, 0] = x, v
    f = force(x)
    damp = 1.0 + 0.5 * b * dt / m
    for step in range(1, n_steps + 1):
        v_half = v + 0.5 * dt / m * (f - b * v)
        x = x + dt * v_half
        f = force(x)
        v = (v_half + 0.5 * dt / m * f) / damp
        if step % record_every == 0:
            xs[:, step // record_every] = x
            vs[:, step // record_every] = v
    times = dt * record_every * np.arange(n_rec)
    return BrownianEnsemble(times, xs, vs, params)


def trajectory_stats(ensemble: BrownianEnsemble, lags, start: float = 0.0) -> dict:
    """Mean-square displacement and velocity autocorrelation at the given lags.

    Lags count stored samples; only samples at times ``>= start`` are used.
    """
    first = int(np.searchsorted(ensemble.times, start - 1e-12))
    x = ensemble.positions[:, first:]
    v = ensemble.velocities[:, first:]
    lags = [int(l) for l in lags]
    n = x.shape[1]
    if any(l < 0 or l >= n for l in lags):
        raise ValueError(f"lags must lie in [0, {n - 1}]")
    msd = [float(np.mean((x[:, l:] - x[:, : n - l]) ** 2)) for l in lags]
    acf = autocorrelation(v, max(lags)) if lags else np.empty(0)
    return {"msd": msd, "vacf": [float(acf[l]) for l in lags]}


def hydrodynamic_residual(ensemble: BrownianEnsemble, U: Potential, at_time: float,
                          core: float = 0.05) -> float:
    """Force-balance residual of the kernel-estimated density and velocity fields.

    ``m V V' + b V + d(U + kT ln rho)/dx`` (with ``V = j/rho`` from a
    velocity-weighted estimate), max over points with ``rho >= core * max``,
    normalized by the largest ``|U'|`` there.  At equilibrium this is the
    stationary force balance and shrinks as the ensemble grows.
    """
    p = ensemble.params
    i = ensemble.index(at_time)
    x, v = ensemble.positions[:, i], ensemble.velocities[:, i]
    h = silverman_bandwidth(x)
    grid = _kde_grid(x, h)
    rho, drho = kde(x, grid, h, derivative=True)
    flux, dflux = kde(x, grid, h, derivative=True, weights=v)
    region = rho >= core * rho.max()
    V = flux[region] / rho[region]
    dV = dflux[region] / rho[region] - flux[region] * drho[region] / rho[region] ** 2
    du = U.evaluate(grid.x[region], 1)
    res = p.mass * V * dV + p.friction * V + du + p.kT * drho[region] / rho[region]
    return float(np.abs(res).max() / np.abs(du).max())
