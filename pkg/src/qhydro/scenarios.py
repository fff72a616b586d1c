"""Scenario registry and orchestration.

Each scenario builds its potential and initial state from a resolved
:class:`~qhydro.config.ScenarioConfig`, runs the relevant pipelines, checks
the invariants that apply to it and optionally exports CSV artifacts plus a
JSON report.
"""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .analysis import ks_critical
from .bohm import (equivariance_distance, integrate_guidance, integrate_newtonian, max_drift,
                   max_separation, preserves_ordering, record_tape, sample_initial)
from .brownian import (LangevinParams, boltzmann_distance, langevin_evolve, meanfield_evolve,
                       trajectory_stats)
from .config import BROWNIAN, TWO_PARTICLE, ScenarioConfig, config_to_dict
from .export import (FIELDS2D_COLUMNS, FIELDS_COLUMNS, STATS_COLUMNS, TRAJECTORY_COLUMNS,
                     WIGNER_COLUMNS, sha256, write_csv, write_json)
from .grid import make_grid
from .madelung import (continuity_residual, decompose, force_balance_residual, mean_q_vs_fisher,
                       q_separability)
from .schrodinger import (PhysicalConstants, double_well, free, gaussian, harmonic,
                          ehrenfest_residual, harmonic_eigenstate, observables, quartic,
                          stationary_state,
                          two_particle_entangled, two_particle_product, iterate)
from .wigner import crosscheck, moyal_evolve, quantum_term, wigner_transform

REPORT_VERSION = 1


class ScenarioError(RuntimeError):
    """A module error, re-raised with the scenario it happened in."""


@dataclass(frozen=True)
class Invariant:
    name: str
    value: float
    tolerance: float
    relation: str  # "<", ">" or "~" (|value - target| <= tolerance)
    passed: bool
    target: float | None = None


def below(name, value, tolerance) -> Invariant:
    value = float(value)
    return Invariant(name, value, float(tolerance), "<", bool(value < tolerance))


def above(name, value, threshold) -> Invariant:
    value = float(value)
    return Invariant(name, value, float(threshold), ">", bool(value > threshold))


def near(name, value, target, tolerance) -> Invariant:
    value = float(value)
    return Invariant(name, value, float(tolerance), "~",
                     bool(abs(value - target) <= tolerance), float(target))


@dataclass
class RunReport:
    scenario: str
    config: dict
    invariants: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(inv.passed for inv in self.invariants)

    def invariant(self, name: str) -> Invariant:
        for inv in self.invariants:
            if inv.name == name:
                return inv
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "scenario": self.scenario,
            "passed": self.passed,
            "config": self.config,
            "invariants": [asdict(inv) for inv in self.invariants],
            "artifacts": self.artifacts,
        }


class _Run:
    """Mutable state shared by the pipeline steps of one scenario run."""

    def __init__(self, config: ScenarioConfig, out_dir, workers: int):
        self.config = config
        self.out_dir = None if out_dir is None else Path(out_dir)
        self.workers = workers
        self.report = RunReport(config.scenario, config_to_dict(config))
        g = config.grid
        self.grid = make_grid(g.n, g.L, g.origin)
        self.constants = PhysicalConstants(config.constants.hbar, config.constants.mass)

    def check(self, *invariants):
        self.report.invariants.extend(invariants)

    @property
    def exporting(self) -> bool:
        return self.out_dir is not None and "csv" in self.config.output.formats

    def export(self, name, columns, data, integer=()):
        if not self.exporting:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = write_csv(self.out_dir / name, columns, data, integer)
        self.report.artifacts.append({"file": name, "sha256": sha256(path),
                                      "bytes": path.stat().st_size})


# -- one-particle quantum pipeline -------------------------------------------------------------

def _quantum_setup(run: _Run):
    name = run.config.scenario
    grid, c = run.grid, run.constants
    m = c.mass
    if name == "free_packet":
        return free(grid), gaussian(grid, 0.0, 0.0, 1.0, c)
    if name in ("harmonic_ground", "harmonic_coherent"):
        U = harmonic(grid, 1.0, m)
        if name == "harmonic_ground":
            guess = harmonic_eigenstate(grid, 0, 1.0, c)
            return U, stationary_state(guess, U, run.config.time.dt)
        return U, gaussian(grid, 2.0, 0.0, np.sqrt(c.hbar / (2 * m)), c)
    if name == "quartic_packet":
        return quartic(grid, 0.1), gaussian(grid, 1.0, 0.0, 1.0, c)
    if name == "double_well":
        return double_well(grid, 1.0, 1.0), gaussian(grid, -1.0, 0.0, 0.5, c)
    raise ValueError(f"{name} is not a one-particle quantum scenario")


def _steps(total: float, dt: float, what: str) -> int:
    n = int(round(total / dt))
    if n < 1 or abs(n * dt - total) > 1e-9 * max(total, 1.0):
        raise ValueError(f"{what}: t_final must be a positive multiple of dt")
    return n


def _evolve_and_record(run: _Run, U, state0):
    cfg = run.config
    dt, stride = cfg.time.dt, cfg.time.frame_stride
    n_steps = _steps(cfg.time.t_final, dt, "time")
    if n_steps % stride or n_steps // stride < 2:
        raise ValueError("t_final/dt must be a multiple of frame_stride covering >= 2 frames")
    mid = n_steps // 2
    trace = []
    states = []
    triple = []

    def on_step(state):
        trace.append(observables(state, U))
        states.append(state)
        k = len(trace) - 1
        if mid - 1 <= k <= mid + 1:
            triple.append(decompose(state, cfg.madelung.rho_floor))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        tape, final = record_tape(state0, U, dt, n_steps // stride + 1, stride,
                                  cfg.madelung.rho_floor, on_step)
    return tape, final, trace, states, triple


# Ehrenfest tolerances by potential: exact closure for quadratic U, discretization-limited otherwise
EHRENFEST_TOLERANCE = {"free_packet": 1e-6, "harmonic_ground": 1e-5, "harmonic_coherent": 1e-5,
                       "quartic_packet": 1e-4, "double_well": 1e-4}


def _conservation(run: _Run, U, trace, states):
    norms = np.array([o.norm for o in trace])
    energies = np.array([o.energy for o in trace])
    run.check(below("norm_drift", np.abs(norms - norms[0]).max(), 1e-9),
              below("energy_drift_relative",
                    np.abs(energies - energies[0]).max() / max(abs(energies[0]), 1e-300), 1e-7))
    dt = run.config.time.dt
    ehr = ehrenfest_residual([(i * dt, o) for i, o in enumerate(trace)], U, states)
    tol = EHRENFEST_TOLERANCE[run.config.scenario]
    run.check(below("ehrenfest_r1", ehr["r1"], tol), below("ehrenfest_r2", ehr["r2"], tol))


def _hydrodynamics(run: _Run, U, triple):
    dt = run.config.time.dt
    run.check(below("continuity_residual", continuity_residual(*triple, dt), 5e-3),
              below("force_balance_residual", force_balance_residual(*triple, U, dt), 5e-3))


def _trajectories(run: _Run, tape, newtonian: bool = True):
    cfg = run.config
    n = cfg.bohm.n_paths
    x0 = sample_initial(tape.rho[0], tape.grid, n, cfg.bohm.seed)
    guided = integrate_guidance(tape, x0, cfg.bohm.dt, cfg.bohm.seed, run.workers)
    t_end = tape.times[-1]
    run.check(below("equivariance_ks", equivariance_distance(guided, tape, t_end), 2.5 / np.sqrt(n)),
              near("ordering_preserved", float(preserves_ordering(guided)), 1.0, 0.0),
              below("flagged_fraction", guided.n_flagged / n, 0.01))
    newton = None
    if newtonian:
        newton = integrate_newtonian(tape, x0, cfg.bohm.dt, seed=cfg.bohm.seed, workers=run.workers)
        run.check(below("guidance_newtonian_deviation", max_separation(guided, newton), 1e-4))
    return guided, newton


def _export_tape(run: _Run, tape):
    if not run.exporting:
        return
    n_frames, n = tape.rho.shape
    frames = tape.frames
    run.export("fields.csv", FIELDS_COLUMNS, {
        "time": np.repeat(tape.times, n),
        "x": np.tile(tape.grid.x, n_frames),
        "rho": tape.rho.ravel(),
        "S": np.concatenate([f.S for f in frames]),
        "V": tape.velocity.ravel(),
        "Q": np.concatenate([f.Q for f in frames]),
        "mask": tape.mask.ravel(),
    }, integer=("mask",))


def _export_paths(run: _Run, times, positions, velocities=None, name="trajectories.csv"):
    if not run.exporting:
        return
    k = min(run.config.output.max_paths, positions.shape[0])
    n_t = times.size
    data = {"path_id": np.repeat(np.arange(k), n_t), "time": np.tile(times, k),
            "x": positions[:k].ravel()}
    columns = TRAJECTORY_COLUMNS
    if velocities is not None:
        data["v"] = velocities[:k].ravel()
        columns = columns + ("v",)
    run.export(name, columns, data, integer=("path_id",))


def _export_wigner(run: _Run, fields):
    if not run.exporting:
        return
    s = run.config.output.wigner_stride
    parts = {c: [] for c in WIGNER_COLUMNS}
    for W in fields:
        xs, ps = W.grid.x[::s], W.grid.p[::s]
        X, P = np.meshgrid(xs, ps, indexing="ij")
        parts["time"].append(np.full(X.size, W.time))
        parts["x"].append(X.ravel())
        parts["p"].append(P.ravel())
        parts["W"].append(W.values[::s, ::s].ravel())
    run.export("wigner.csv", WIGNER_COLUMNS, {c: np.concatenate(v) for c, v in parts.items()})


def _run_quantum(run: _Run):
    cfg = run.config
    name = cfg.scenario
    c = run.constants
    U, state0 = _quantum_setup(run)
    tape, final, trace, states, triple = _evolve_and_record(run, U, state0)
    _conservation(run, U, trace, states)
    del states
    _hydrodynamics(run, U, triple)
    # second-order paths are unstable near the density dips of anharmonic states,
    # so the pathwise comparison is only asserted where the flow is smooth
    guided, _ = _trajectories(run, tape, newtonian=name in ("free_packet", "harmonic_coherent"))
    _export_tape(run, tape)
    _export_paths(run, guided.times, guided.positions)
    t_end = cfg.time.t_final
    x = run.grid.x

    if name == "free_packet":
        sigma = 1.0
        expected = sigma**2 + (c.hbar * t_end / (2 * c.mass * sigma)) ** 2
        q0 = c.hbar**2 / (4 * c.mass * sigma**2)
        fields0 = tape.frames[0]
        i0 = int(np.argmin(np.abs(x)))
        qf = mean_q_vs_fisher(fields0.rho, run.grid, c, cfg.madelung.rho_floor)
        run.check(near("var_x_final", trace[-1].var_x, expected, 1e-6),
                  near("Q_at_center", fields0.Q[i0], q0, 1e-6),
                  near("mean_Q", qf["mean_q"], q0 / 2, 1e-6),
                  near("mean_Q_minus_fisher", qf["mean_q"] - qf["fisher_scaled"], 0.0, 1e-6))
        return

    if name == "harmonic_ground":
        run.check(below("stationary_max_drift", max_drift(guided), 1e-12))
        exact = harmonic_eigenstate(run.grid, 0, 1.0, c)
        fields = decompose(exact, cfg.madelung.rho_floor)
        balance = np.abs(U.derivative(1) + fields.grad_Q)[fields.mask].max()
        W = wigner_transform(exact)
        X, P = np.meshgrid(W.grid.x, W.grid.p, indexing="ij")
        s2 = c.hbar / (2 * c.mass)
        analytic = np.exp(-X**2 / (2 * s2) - 2 * s2 * P**2 / c.hbar**2) / (np.pi * c.hbar)
        run.check(below("ground_state_force_balance", balance, 1e-6),
                  below("wigner_ground_state_error", np.abs(W.values - analytic).max(), 1e-10))
        _export_wigner(run, [W])
        return

    k_max = cfg.wigner.k_max
    check = crosscheck(state0, U, t_end, cfg.time.dt, k_max)
    run.check(below(f"wigner_crosscheck_k{k_max}", check["error"], 1e-3))
    _export_wigner(run, [wigner_transform(state0), check["moyal"]])

    if name == "harmonic_coherent":
        W0 = wigner_transform(state0)
        n_steps = _steps(t_end, cfg.time.dt, "time")
        a = check["moyal"] if k_max == 0 else moyal_evolve(W0, U, cfg.time.dt, n_steps, 0, c.mass)
        b = check["moyal"] if k_max == 2 else moyal_evolve(W0, U, cfg.time.dt, n_steps, 2, c.mass)
        gap = np.abs(a.values - b.values).max() / np.abs(b.values).max()
        run.check(below("quadratic_series_truncation_gap", gap, 1e-12))
        mean_x = np.array([o.mean_x for o in trace])
        times = cfg.time.dt * np.arange(mean_x.size)
        run.check(below("coherent_mean_x_error", np.abs(mean_x - 2.0 * np.cos(times)).max(), 1e-5))
    elif name == "quartic_packet":
        classical = crosscheck(state0, U, t_end, cfg.time.dt, 0)["error"]
        W0 = wigner_transform(state0)
        integral = np.abs(quantum_term(W0, U, max(k_max, 1)).sum(axis=1) * W0.grid.dp).max()
        run.check(above("classical_to_quantum_error_ratio", classical / check["error"], 10.0),
                  below("quantum_term_p_integral", integral, 1e-10))


# -- two particles -----------------------------------------------------------------------------

def _run_two_particle(run: _Run):
    cfg = run.config
    c = run.constants
    grids = (run.grid, run.grid)
    if cfg.scenario == "two_particle_product":
        state0 = two_particle_product(grids, (-2.0, 0.0, 1.0), (2.0, 0.0, 1.0), c)
    else:
        state0 = two_particle_entangled(grids, 2.0, 1.0, c)
    U = free(run.grid)
    n_steps = _steps(cfg.time.t_final, cfg.time.dt, "time")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        states = [s for i, s in enumerate(iterate(state0, U, cfg.time.dt, n_steps))
                  if i in (0, n_steps)]
    h = run.grid.spacing
    norms = [float(np.sum(s.density) * h * h) for s in states]
    run.check(below("norm_drift", abs(norms[-1] - norms[0]), 1e-9))
    fields = [decompose(s, cfg.madelung.rho_floor) for s in states]
    for label, f in zip(("initial", "final"), fields):
        value = q_separability(f)
        if cfg.scenario == "two_particle_product":
            run.check(below(f"q_mixed_derivative_{label}", value, 1e-6))
        else:
            run.check(above(f"q_mixed_derivative_{label}", value, 0.01))
    if run.exporting:
        n = run.grid.n_points
        X1, X2 = np.meshgrid(run.grid.x, run.grid.x, indexing="ij")
        run.export("fields2d.csv", FIELDS2D_COLUMNS, {
            "time": np.repeat([f.time for f in fields], n * n),
            "x1": np.tile(X1.ravel(), len(fields)),
            "x2": np.tile(X2.ravel(), len(fields)),
            "rho": np.concatenate([f.rho.ravel() for f in fields]),
            "Q": np.concatenate([f.Q.ravel() for f in fields]),
            "mask": np.concatenate([f.mask.ravel() for f in fields]),
        }, integer=("mask",))


# -- Brownian analogy --------------------------------------------------------------------------

def _langevin_params(cfg: ScenarioConfig) -> LangevinParams:
    b = cfg.brownian
    return LangevinParams(b.mass, b.friction, b.kT, b.dt, b.n_paths, b.seed)


def _record_every(p: LangevinParams) -> int:
    # store at spacing 0.1 m/b (at least every step)
    return max(1, int(round(0.1 * p.mass / p.friction / p.dt)))


def _run_brownian(run: _Run):
    cfg = run.config
    p = _langevin_params(cfg)
    n = p.n_paths
    t_end = cfg.time.t_final
    _steps(t_end, p.dt, "time")
    every = _record_every(p)
    crit = ks_critical(n)
    relax = 10.0 * p.mass / p.friction
    if cfg.scenario == "brownian_doublewell":
        U = double_well(run.grid, 1.0, 1.0)
        x0 = np.where(np.arange(n) % 2 == 0, -1.0, 1.0)
        ens = langevin_evolve(U, p, x0, None, t_end, every, run.workers)
        run.check(below("boltzmann_ks", boltzmann_distance(ens, U, ens.times[-1]), 2 * crit))
        _export_paths(run, ens.times, ens.positions, ens.velocities)
        return

    omega = 1.0
    U = harmonic(run.grid, omega, p.mass)
    var_x = p.kT / (p.mass * omega**2)
    if cfg.scenario == "brownian_harmonic":
        ens = langevin_evolve(U, p, 0.0, None, t_end, every, run.workers)
        stationary = ens.times >= relax
        if not stationary.any():
            raise ValueError(f"t_final must exceed the relaxation time {relax}")
        run.check(near("stationary_var_x", ens.positions[:, stationary].var(), var_x, 0.05 * var_x),
                  near("stationary_var_v", ens.velocities[:, stationary].var(),
                       p.kT / p.mass, 0.05 * p.kT / p.mass),
                  above("initial_boltzmann_ks", boltzmann_distance(ens, U, 0.0), 0.3),
                  below("boltzmann_ks", boltzmann_distance(ens, U, ens.times[-1]), crit))
        _export_paths(run, ens.times, ens.positions, ens.velocities)
        return

    # meanfield_contrast: both ensembles start from the Boltzmann density
    x0 = np.sqrt(var_x) * rng.normals(p.seed, 0, 0, n)
    v0 = np.sqrt(p.kT / p.mass) * rng.normals(p.seed, 0, n, n)
    lang = langevin_evolve(U, p, x0, v0, t_end, every, run.workers)
    mf = meanfield_evolve(U, p, x0, t_end, every, cfg.brownian.bandwidth_scale)
    lag = int(round(p.mass / p.friction / (p.dt * every)))
    lags = np.arange(0, 3 * lag + 1)
    if relax + lags[-1] * p.dt * every > t_end:
        raise ValueError(f"t_final must exceed the relaxation time {relax} plus 3 m/b of lags")
    stats_l = trajectory_stats(lang, lags, start=relax)
    stats_m = trajectory_stats(mf, lags, start=relax)
    msd_l, msd_m = stats_l["msd"][lag], stats_m["msd"][lag]
    run.check(below("langevin_boltzmann_ks", boltzmann_distance(lang, U, lang.times[-1]), crit),
              below("meanfield_boltzmann_ks", boltzmann_distance(mf, U, mf.times[-1]), crit),
              below("msd_ratio", msd_m / msd_l, 0.2))
    _export_paths(run, mf.times, mf.positions, mf.velocities)
    _export_paths(run, lang.times, lang.positions, lang.velocities, "trajectories_langevin.csv")
    run.export("trajectory_stats.csv", STATS_COLUMNS, {
        "lag": lags * p.dt * every,
        "msd_langevin": stats_l["msd"], "msd_meanfield": stats_m["msd"],
        "vacf_langevin": stats_l["vacf"], "vacf_meanfield": stats_m["vacf"]})


def run_scenario(config: ScenarioConfig, out_dir=None, workers: int = 1) -> RunReport:
    """Execute one scenario; export artifacts and ``report.json`` when ``out_dir`` is given."""
    run = _Run(config, out_dir, workers)
    try:
        if config.scenario in BROWNIAN:
            _run_brownian(run)
        elif config.scenario in TWO_PARTICLE:
            _run_two_particle(run)
        else:
            _run_quantum(run)
    except (ValueError, FloatingPointError, RuntimeError) as err:
        raise ScenarioError(f"{config.scenario}: {err}") from err
    if run.out_dir is not None and "json" in config.output.formats:
        run.out_dir.mkdir(parents=True, exist_ok=True)
        write_json(run.out_dir / "report.json", run.report.to_dict())
    return run.report
