"""Split-step spectral propagation of the Schrödinger equation.

States are carried as :class:`WaveField` values (immutable by convention).  One
particle lives on a 1D :class:`~qhydro.grid.Grid`; two particles live on the
tensor product of two grids and share the same propagator code.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import Grid, integrate, interpolate, spectral_derivative

TAIL_TOLERANCE = 1e-10
MAX_DERIVATIVE_ORDER = 5


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.mass > 0):
            raise ValueError("hbar and mass must be positive")


@dataclass(frozen=True)
class Potential:
    """A time-independent potential materialized on a 1D grid.

    ``func(x, order)`` evaluates the ``order``-th derivative analytically; it is
    None for tabulated potentials, whose derivatives are spectral.
    """

    kind: str
    grid: Grid
    values: np.ndarray
    params: dict = field(default_factory=dict)
    func: Callable | None = field(default=None, repr=False, compare=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def derivative(self, order: int) -> np.ndarray:
        """Cached ``order``-th derivative on the grid (0 returns the values)."""
        if order == 0:
            return self.values
        if not 1 <= order <= MAX_DERIVATIVE_ORDER:
            raise ValueError(f"derivative order must be in 0..{MAX_DERIVATIVE_ORDER}")
        if order not in self._cache:
            if self.func is not None:
                d = np.asarray(self.func(self.grid.x, order), dtype=float)
                d = np.broadcast_to(d, self.grid.x.shape).copy()
            else:
                d = spectral_derivative(self.values, self.grid, order)
            d.flags.writeable = False
            self._cache[order] = d
        return self._cache[order]

    def evaluate(self, x, order: int = 0):
        """Potential (or a derivative) at arbitrary positions."""
        if self.func is not None:
            return self.func(np.asarray(x, dtype=float), order)
        return interpolate(self.derivative(order), self.grid, x)

    @property
    def is_free(self) -> bool:
        return self.kind == "free"


def _analytic(kind: str, grid: Grid, func, **params) -> Potential:
    values = np.broadcast_to(np.asarray(func(grid.x, 0), dtype=float), grid.x.shape).copy()
    values.flags.writeable = False
    return Potential(kind, grid, values, params, func)


def free(grid: Grid) -> Potential:
    return _analytic("free", grid, lambda x, order: np.zeros_like(x))


def harmonic(grid: Grid, omega: float = 1.0, mass: float = 1.0) -> Potential:
    """``U = m omega^2 x^2 / 2``."""
    c = mass * omega**2

    def func(x, order):
        x = np.asarray(x, dtype=float)
        if order == 0:
            return 0.5 * c * x * x
        if order == 1:
            return c * x
        if order == 2:
            return np.full_like(x, c)
        return np.zeros_like(x)

    return _analytic("harmonic", grid, func, omega=omega, mass=mass)


def quartic(grid: Grid, lam: float, a: float = 0.0) -> Potential:
    """``U = lam x^4 + a x^2``."""

    def func(x, order):
        x = np.asarray(x, dtype=float)
        terms = {
            0: lam * x**4 + a * x**2,
            1: 4 * lam * x**3 + 2 * a * x,
            2: 12 * lam * x**2 + 2 * a,
            3: 24 * lam * x,
            4: np.full_like(x, 24 * lam),
        }
        return terms.get(order, np.zeros_like(x)) + 0.0 * x

    return _analytic("quartic", grid, func, lam=lam, a=a)


def double_well(grid: Grid, a: float = 1.0, b: float = 1.0) -> Potential:
    """``U = a (x^2 - b^2)^2``."""

    def func(x, order):
        x = np.asarray(x, dtype=float)
        b2 = b * b
        terms = {
            0: a * (x * x - b2) ** 2,
            1: 4 * a * x * (x * x - b2),
            2: a * (12 * x * x - 4 * b2),
            3: 24 * a * x,
            4: np.full_like(x, 24 * a),
        }
        return terms.get(order, np.zeros_like(x)) + 0.0 * x

    return _analytic("double_well", grid, func, a=a, b=b)


def tabulated(grid: Grid, values) -> Potential:
    values = np.array(values, dtype=float)
    if values.shape != grid.x.shape or not np.all(np.isfinite(values)):
        raise ValueError("tabulated potential must be finite and match the grid")
    values.flags.writeable = False
    return Potential("custom", grid, values)


@dataclass(frozen=True)
class WaveField:
    grids: tuple
    psi: np.ndarray
    constants: PhysicalConstants = PhysicalConstants()
    time: float = 0.0

    @property
    def ndim(self) -> int:
        return len(self.grids)

    @property
    def grid(self) -> Grid:
        if self.ndim != 1:
            raise ValueError("grid is only defined for one-particle states")
        return self.grids[0]

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def norm(self) -> float:
        return float(_integrate_nd(self.density, self.grids))


@dataclass(frozen=True)
class Observables:
    norm: float
    mean_x: float
    mean_p: float
    energy: float
    var_x: float


def _integrate_nd(f, grids) -> float:
    cell = math.prod(g.spacing for g in grids)
    return cell * np.sum(f)


def _edge_max(a: np.ndarray) -> float:
    edges = []
    for axis in range(a.ndim):
        edges.append(np.abs(np.take(a, [0, -1], axis=axis)).max())
    return max(edges)


def _finish(psi, grids, constants, time=0.0) -> WaveField:
    psi = np.asarray(psi, dtype=complex)
    norm = _integrate_nd(np.abs(psi) ** 2, grids)
    psi = psi / np.sqrt(norm)
    tail = _edge_max(psi)
    if tail >= TAIL_TOLERANCE:
        raise ValueError(f"state not contained in the domain: |psi| at edge = {tail:.2e}")
    psi.flags.writeable = False
    return WaveField(tuple(grids), psi, constants, time)


def _gaussian_1d(x, x0, p0, sigma, hbar):
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return np.exp(-((x - x0) ** 2) / (4.0 * sigma**2) + 1j * p0 * x / hbar)


def gaussian(grid: Grid, x0=0.0, p0=0.0, sigma=1.0, constants=PhysicalConstants()) -> WaveField:
    """Minimum-uncertainty packet with ``<x> = x0``, ``<p> = p0`` and position std ``sigma``."""
    return _finish(_gaussian_1d(grid.x, x0, p0, sigma, constants.hbar), (grid,), constants)


def hermite_functions(xi, n_max: int) -> list:
    """Normalized Hermite functions up to ``n_max`` by stable recurrence."""
    out = [np.pi ** -0.25 * np.exp(-0.5 * xi * xi)]
    if n_max >= 1:
        out.append(np.sqrt(2.0) * xi * out[0])
    for n in range(1, n_max):
        out.append(np.sqrt(2.0 / (n + 1)) * xi * out[n] - np.sqrt(n / (n + 1)) * out[n - 1])
    return out


def harmonic_eigenstate(grid: Grid, n: int = 0, omega: float = 1.0,
                        constants=PhysicalConstants()) -> WaveField:
    if n < 0:
        raise ValueError("quantum number must be nonnegative")
    scale = np.sqrt(constants.mass * omega / constants.hbar)
    phi = hermite_functions(scale * grid.x, n)[n]
    return _finish(phi.astype(complex), (grid,), constants)


def two_particle_product(grids: Sequence[Grid], packet1=(0.0, 0.0, 1.0), packet2=(0.0, 0.0, 1.0),
                         constants=PhysicalConstants()) -> WaveField:
    """``psi(x1, x2) = g1(x1) g2(x2)`` for two Gaussian packets ``(x0, p0, sigma)``."""
    g1, g2 = grids
    a = _gaussian_1d(g1.x, *packet1, constants.hbar)
    b = _gaussian_1d(g2.x, *packet2, constants.hbar)
    return _finish(np.outer(a, b), (g1, g2), constants)


def two_particle_entangled(grids: Sequence[Grid], separation: float = 2.0, sigma: float = 1.0,
                           constants=PhysicalConstants()) -> WaveField:
    """Symmetrized pair ``g(x1-a) g(x2+a) + g(x1+a) g(x2-a)``."""
    g1, g2 = grids
    a = separation
    h = constants.hbar
    left1, right1 = _gaussian_1d(g1.x, a, 0, sigma, h), _gaussian_1d(g1.x, -a, 0, sigma, h)
    left2, right2 = _gaussian_1d(g2.x, -a, 0, sigma, h), _gaussian_1d(g2.x, a, 0, sigma, h)
    return _finish(np.outer(left1, left2) + np.outer(right1, right2), (g1, g2), constants)


def init_state(spec: dict, grid, constants=PhysicalConstants()) -> WaveField:
    """Build a normalized state from a small description.

    ``spec["kind"]`` is one of ``gaussian`` (x0, p0, sigma), ``eigenstate``
    (n, omega), ``product`` (packet1, packet2) or ``entangled``
    (separation, sigma).  Two-particle kinds take a pair of grids.
    """
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "gaussian":
        return gaussian(grid, constants=constants, **spec)
    if kind == "eigenstate":
        return harmonic_eigenstate(grid, constants=constants, **spec)
    if kind == "product":
        return two_particle_product(grid, constants=constants, **spec)
    if kind == "entangled":
        return two_particle_entangled(grid, constants=constants, **spec)
    raise ValueError(f"unknown state kind {kind!r}")


def potential_values(state: WaveField, U: Potential) -> np.ndarray:
    """Potential on the state's grid; two particles feel ``U(x1) + U(x2)``."""
    if state.ndim == 1:
        return U.values
    return U.evaluate(state.grids[0].x)[:, None] + U.evaluate(state.grids[1].x)[None, :]


def _kinetic_symbol(grids) -> np.ndarray:
    ks = np.meshgrid(*[g.wavenumbers for g in grids], indexing="ij")
    return sum(k * k for k in ks)


def max_stable_dt(grids, constants: PhysicalConstants) -> float:
    h = min(g.spacing for g in grids)
    return 0.5 * constants.mass * h * h / constants.hbar


class Propagator:
    """Strang split-step kernel with the phase factors precomputed for one dt."""

    def __init__(self, grids, U: Potential, dt: float, constants: PhysicalConstants,
                 check_dt: bool = True):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.grids = tuple(grids)
        self.dt = float(dt)
        if check_dt and dt > max_stable_dt(self.grids, constants):
            warnings.warn(f"dt={dt} exceeds the recommended bound "
                          f"{max_stable_dt(self.grids, constants):.3g}", stacklevel=2)
        probe = WaveField(self.grids, np.empty(0), constants)
        u = potential_values(probe, U)
        hbar, m = constants.hbar, constants.mass
        self.half_potential = np.exp(-0.5j * dt * u / hbar)
        self.kinetic = np.exp(-0.5j * hbar * dt * _kinetic_symbol(self.grids) / m)

    def __call__(self, psi: np.ndarray) -> np.ndarray:
        psi = psi * self.half_potential
        psi = np.fft.ifftn(self.kinetic * np.fft.fftn(psi))
        return psi * self.half_potential


def step(state: WaveField, U: Potential, dt: float) -> WaveField:
    """Advance one Strang step: half potential kick, exact kinetic drift, half kick."""
    prop = Propagator(state.grids, U, dt, state.constants)
    psi = prop(state.psi)
    psi.flags.writeable = False
    return WaveField(state.grids, psi, state.constants, state.time + dt)


def iterate(state: WaveField, U: Potential, dt: float, n_steps: int, check_dt: bool = True):
    """Yield ``state`` and then each of the next ``n_steps`` Strang steps."""
    prop = Propagator(state.grids, U, dt, state.constants, check_dt=check_dt)
    yield state
    psi = state.psi
    for i in range(1, n_steps + 1):
        psi = prop(psi)
        psi.flags.writeable = False
        yield WaveField(state.grids, psi, state.constants, state.time + i * dt)


def evolve(state: WaveField, U: Potential, dt: float, n_steps: int, every: int = 1,
           check_dt: bool = True) -> list:
    """States after every ``every``-th of ``n_steps`` Strang steps, initial state included."""
    if every < 1:
        raise ValueError("every must be >= 1")
    return [s for i, s in enumerate(iterate(state, U, dt, n_steps, check_dt)) if i % every == 0]


def observables(state: WaveField, U: Potential) -> Observables:
    """Norm, position moments, mean momentum and energy of a one-particle state."""
    grid = state.grid
    hbar, m = state.constants.hbar, state.constants.mass
    psi = state.psi
    rho = np.abs(psi) ** 2
    norm = integrate(rho, grid)
    mean_x = integrate(grid.x * rho, grid) / norm
    var_x = integrate((grid.x - mean_x) ** 2 * rho, grid) / norm
    dpsi = spectral_derivative(psi, grid, 1)
    mean_p = hbar * integrate(np.imag(np.conj(psi) * dpsi), grid) / norm
    # kinetic energy from the spectrum avoids a second derivative
    psi_k = np.fft.fft(psi)
    kinetic = (hbar**2 / (2 * m)) * np.sum(grid.wavenumbers**2 * np.abs(psi_k) ** 2) \
        * grid.spacing / grid.n_points
    potential = integrate(U.values * rho, grid)
    energy = (kinetic + potential) / norm
    return Observables(float(norm), float(mean_x), float(mean_p), float(energy), float(var_x))


def ehrenfest_residual(trace, U: Potential, states) -> dict:
    """Maximum violation of the two Ehrenfest identities along a trajectory of states.

    ``trace`` is a list of ``(time, Observables)`` at uniformly spaced times and
    ``states`` the matching wavefunctions (used for the mean force).  Time
    derivatives are centered differences at the interior samples.
    """
    if len(trace) < 3 or len(states) != len(trace):
        raise ValueError("need at least 3 uniformly spaced samples with matching states")
    times = np.array([t for t, _ in trace], dtype=float)
    gaps = np.diff(times)
    if not np.allclose(gaps, gaps[0], rtol=1e-9, atol=1e-12):
        raise ValueError("samples must be uniformly spaced in time")
    dt = gaps[0]
    mass = states[0].constants.mass
    x = np.array([o.mean_x for _, o in trace])
    p = np.array([o.mean_p for _, o in trace])
    force = np.array([integrate(U.derivative(1) * s.density, s.grid) for s in states])
    dx = (x[2:] - x[:-2]) / (2 * dt)
    dp = (p[2:] - p[:-2]) / (2 * dt)
    r1 = np.max(np.abs(dx - p[1:-1] / mass))
    r2 = np.max(np.abs(dp + force[1:-1]))
    return {"r1": float(r1), "r2": float(r2)}


def stationary_state(guess: WaveField, U: Potential, dt: float, refinements: int = 2) -> WaveField:
    """Eigenvector of the one-step Strang map closest to ``guess``.

    The analytic eigenstates of ``H`` are stationary only up to O(dt^2) under
    the split-step map; this returns the state that the discrete propagator
    leaves invariant up to a global phase, chosen real.  Dense, so limited to
    one-particle grids of at most 1024 points.
    """
    grid = guess.grid
    if grid.n_points > 1024:
        raise ValueError("stationary_state is dense; use at most 1024 points")
    prop = Propagator((grid,), U, dt, guess.constants, check_dt=False)
    n = grid.n_points
    M = np.empty((n, n), dtype=complex)
    basis = np.eye(n, dtype=complex)
    for j in range(n):
        M[:, j] = prop(basis[:, j])
    eigvals, eigvecs = np.linalg.eig(M)
    i = int(np.argmax(np.abs(eigvecs.conj().T @ guess.psi)))
    lam, vec = eigvals[i], eigvecs[:, i]
    shifted = M - lam * np.eye(n)
    for _ in range(refinements):
        vec = np.linalg.solve(shifted, vec)
        vec /= np.linalg.norm(vec)
    vec = vec * np.exp(-1j * np.angle(vec[np.argmax(np.abs(vec))]))
    real = vec.real
    if np.vdot(guess.psi, real).real < 0:
        real = -real
    return _finish(real.astype(complex), (grid,), guess.constants, guess.time)
