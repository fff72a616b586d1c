"""Numerical workbench for trajectory, hydrodynamic, phase-space and Brownian pictures of
one-dimensional quantum dynamics."""

from .grid import Grid, make_grid
from .schrodinger import PhysicalConstants, Potential, WaveField
from .config import ScenarioConfig, parse_config
from .scenarios import RunReport, run_scenario

__all__ = ["Grid", "make_grid", "PhysicalConstants", "Potential", "WaveField",
           "ScenarioConfig", "parse_config", "RunReport", "run_scenario"]
__version__ = "0.1.0"
