"""Bohmian trajectories driven by a recorded sequence of Madelung fields.

A :class:`FieldTape` stores velocity and force fields at uniformly spaced
frames.  Integrators interpolate them cubically in space and linearly in
time.  Paths are independent, so ensembles can be split across threads; the
result does not depend on the split.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .analysis import ks_distance
from .grid import Grid, interpolate, periodic_cdf
from .madelung import DEFAULT_RHO_FLOOR, decompose
from .schrodinger import Potential, WaveField, iterate

MAX_FLAGGED_FRACTION = 0.01


class TrajectoryError(RuntimeError):
    """Too many paths left the resolved (unmasked) region."""


@dataclass(frozen=True)
class FieldTape:
    times: np.ndarray
    grid: Grid
    mass: float
    rho: np.ndarray
    velocity: np.ndarray
    force: np.ndarray
    mask: np.ndarray
    frames: list = field(repr=False, compare=False, default_factory=list)

    @property
    def dt_frame(self) -> float:
        return float(self.times[1] - self.times[0])

    @classmethod
    def from_fields(cls, frames, U: Potential) -> "FieldTape":
        """Stack decomposed snapshots; the force is ``-(U' + Q')``."""
        frames = list(frames)
        if len(frames) < 2:
            raise ValueError("a tape needs at least two frames")
        times = np.array([f.time for f in frames])
        gaps = np.diff(times)
        if not np.allclose(gaps, gaps[0], rtol=1e-9, atol=1e-14) or gaps[0] <= 0:
            raise ValueError("frames must be uniformly spaced in time")
        grid = frames[0].grid
        if any(f.grid != grid for f in frames):
            raise ValueError("frames must share one grid")
        u1 = U.derivative(1)
        force = np.stack([np.where(f.mask, -(u1 + f.grad_Q), 0.0) for f in frames])
        return cls(times=times, grid=grid, mass=frames[0].constants.mass,
                   rho=np.stack([f.rho for f in frames]),
                   velocity=np.stack([f.V for f in frames]),
                   force=force, mask=np.stack([f.mask for f in frames]), frames=frames)

    def locate(self, t: float):
        """Frame index ``i`` and weight ``w`` with ``t = (1-w) t_i + w t_{i+1}``."""
        s = (t - self.times[0]) / self.dt_frame
        if s < -1e-9 or s > len(self.times) - 1 + 1e-9:
            raise ValueError(f"time {t} outside tape range")
        i = min(int(np.floor(s + 1e-9)), len(self.times) - 2)
        return i, min(max(s - i, 0.0), 1.0)

    def frame_index(self, t: float) -> int:
        i, w = self.locate(t)
        if w < 1e-6:
            return i
        if w > 1 - 1e-6:
            return i + 1
        raise ValueError(f"time {t} is not a frame time")

    def _sample(self, table, x, t):
        i, w = self.locate(t)
        row = table[i] if w == 0.0 else (1.0 - w) * table[i] + w * table[i + 1]
        return interpolate(row, self.grid, x)

    def velocity_at(self, x, t):
        return self._sample(self.velocity, x, t)

    def acceleration_at(self, x, t):
        return self._sample(self.force, x, t) / self.mass

    def resolved(self, x, t) -> np.ndarray:
        """True where the nearest node is unmasked in both bracketing frames."""
        i, _ = self.locate(t)
        j = np.rint((self.grid.wrap(x) - self.grid.origin) / self.grid.spacing).astype(np.int64)
        j %= self.grid.n_points
        return self.mask[i, j] & self.mask[i + 1, j]


def record_tape(state: WaveField, U: Potential, dt: float, n_frames: int, frame_stride: int,
                rho_floor: float = DEFAULT_RHO_FLOOR, on_step=None):
    """Evolve ``state`` and decompose it every ``frame_stride`` steps.

    Returns ``(tape, final_state)``.  ``on_step(state)`` is called on every
    state including the first, which lets callers collect observables without
    storing all wavefunctions.
    """
    frames = []
    final = state
    for i, current in enumerate(iterate(state, U, dt, (n_frames - 1) * frame_stride)):
        if on_step is not None:
            on_step(current)
        if i % frame_stride == 0:
            frames.append(decompose(current, rho_floor))
        final = current
    return FieldTape.from_fields(frames, U), final


@dataclass(frozen=True)
class TrajectoryEnsemble:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray | None = None
    seed: int | None = None
    flagged: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return self.positions.shape[0]

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"no stored sample at t={t}")
        return self.positions[:, i]

    @property
    def n_flagged(self) -> int:
        return 0 if self.flagged is None else int(self.flagged.sum())


def sample_initial(rho0, grid: Grid, n_paths: int, seed: int) -> np.ndarray:
    """Inverse-CDF samples from the piecewise-linear CDF of ``rho0``.

    Path ``i`` uses the counter-based uniform addressed by ``(seed, 0, i)``.
    """
    nodes, cdf = periodic_cdf(rho0, grid)
    u = rng.uniforms(seed, 0, 0, n_paths)
    return np.interp(u, cdf, nodes)


def _substeps(tape: FieldTape, dt: float) -> int:
    ratio = tape.dt_frame / dt
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-6 * ratio:
        raise ValueError(f"dt={dt} must divide the frame spacing {tape.dt_frame}")
    return k


def _run_chunks(func, arrays, workers: int):
    """Apply ``func`` to row chunks of ``arrays`` and concatenate the results."""
    n = arrays[0].shape[0]
    if workers <= 1 or n < 2 * workers:
        return func(*arrays)
    bounds = np.linspace(0, n, workers + 1).astype(int)
    parts = [tuple(a[lo:hi] for a in arrays) for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda p: func(*p), parts))
    return tuple(np.concatenate(r) for r in zip(*results))


def _check_flagged(flagged: np.ndarray):
    fraction = flagged.mean() if flagged.size else 0.0
    if fraction > MAX_FLAGGED_FRACTION:
        raise TrajectoryError(f"{flagged.sum()} of {flagged.size} paths entered masked regions")


def integrate_guidance(tape: FieldTape, initial_positions, dt: float, seed: int | None = None,
                       workers: int = 1) -> TrajectoryEnsemble:
    """RK4 on ``dR/dt = V(R, t)``; positions are stored at every frame time.

    Paths whose position falls in a masked region are frozen there and flagged.
    """
    k = _substeps(tape, dt)
    n_frames = len(tape.times)

    def run(x0):
        x = np.array(x0, dtype=float)
        frozen = np.zeros(x.shape, dtype=bool)
        out = np.empty((x.size, n_frames))
        out[:, 0] = x
        for f in range(n_frames - 1):
            for s in range(k):
                t = tape.times[f] + s * dt
                frozen |= ~tape.resolved(x, t)
                k1 = tape.velocity_at(x, t)
                k2 = tape.velocity_at(x + 0.5 * dt * k1, t + 0.5 * dt)
                k3 = tape.velocity_at(x + 0.5 * dt * k2, t + 0.5 * dt)
                k4 = tape.velocity_at(x + dt * k3, t + dt)
                step = dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                x = np.where(frozen, x, x + step)
            out[:, f + 1] = x
        return out, frozen

    x0 = np.asarray(initial_positions, dtype=float)
    positions, flagged = _run_chunks(run, (x0,), workers)
    _check_flagged(flagged)
    return TrajectoryEnsemble(tape.times.copy(), positions, None, seed, flagged)


def integrate_newtonian(tape: FieldTape, initial_positions, dt: float, velocity_offset: float = 0.0,
                        initial_velocities=None, seed: int | None = None,
                        workers: int = 1) -> TrajectoryEnsemble:
    """Velocity Verlet on ``m R'' = -d(U + Q)/dx``.

    Initial velocities default to the guidance value ``V(R0, 0)`` (plus
    ``velocity_offset``), which is the condition under which the second-order
    law reproduces the first-order one.
    """
    k = _substeps(tape, dt)
    n_frames = len(tape.times)
    x0 = np.asarray(initial_positions, dtype=float)
    if initial_velocities is None:
        v0 = tape.velocity_at(x0, tape.times[0]) + velocity_offset
    else:
        v0 = np.asarray(initial_velocities, dtype=float) + velocity_offset

    def run(x_init, v_init):
        x = np.array(x_init, dtype=float)
        v = np.array(v_init, dtype=float)
        frozen = np.zeros(x.shape, dtype=bool)
        xs = np.empty((x.size, n_frames))
        vs = np.empty((x.size, n_frames))
        xs[:, 0], vs[:, 0] = x, v
        a = tape.acceleration_at(x, tape.times[0])
        for f in range(n_frames - 1):
            for s in range(k):
                t = tape.times[f] + s * dt
                frozen |= ~tape.resolved(x, t)
                x_new = x + v * dt + 0.5 * a * dt * dt
                a_new = tape.acceleration_at(x_new, t + dt)
                v_new = v + 0.5 * (a + a_new) * dt
                x = np.where(frozen, x, x_new)
                v = np.where(frozen, v, v_new)
                a = np.where(frozen, a, a_new)
            xs[:, f + 1], vs[:, f + 1] = x, v
        return xs, vs, frozen

    positions, velocities, flagged = _run_chunks(run, (x0, v0), workers)
    _check_flagged(flagged)
    return TrajectoryEnsemble(tape.times.copy(), positions, velocities, seed, flagged)


def equivariance_distance(ensemble: TrajectoryEnsemble, tape: FieldTape, t: float) -> float:
    """KS distance between ensemble positions at ``t`` and the tape density at ``t``."""
    frame = tape.frame_index(t)
    nodes, cdf = periodic_cdf(tape.rho[frame], tape.grid)
    x = tape.grid.wrap(ensemble.at(t))
    return ks_distance(x, lambda q: np.interp(q, nodes, cdf))


def preserves_ordering(ensemble: TrajectoryEnsemble) -> bool:
    """True when the initial left-to-right order of paths holds at every stored time."""
    order = np.argsort(ensemble.positions[:, 0], kind="stable")
    ordered = ensemble.positions[order]
    return bool(np.all(np.diff(ordered, axis=0) >= 0))


def max_drift(ensemble: TrajectoryEnsemble) -> float:
    return float(np.max(np.abs(ensemble.positions - ensemble.positions[:, :1])))


def max_separation(a: TrajectoryEnsemble, b: TrajectoryEnsemble) -> float:
    return float(np.max(np.abs(a.positions - b.positions)))
