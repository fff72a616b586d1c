import warnings

import numpy as np
import pytest

from qhydro.grid import make_grid
from qhydro.schrodinger import PhysicalConstants


@pytest.fixture(scope="session")
def grid():
    """Default workbench grid: n=512 on [-20, 20)."""
    return make_grid(512, 40.0, -20.0)


@pytest.fixture(scope="session")
def coarse():
    return make_grid(256, 40.0, -20.0)


@pytest.fixture(scope="session")
def units():
    return PhysicalConstants(1.0, 1.0)


@pytest.fixture(autouse=True)
def _quiet_dt_warnings():
    # the recommended split-step bound is advisory; tests pick dt on purpose
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="dt=.*exceeds the recommended bound")
        yield


def band_limited(grid, rng_seed=0, modes=6):
    """Random real trigonometric polynomial with a few low modes."""
    r = np.random.default_rng(rng_seed)
    x = grid.x - grid.origin
    f = np.zeros_like(x)
    for m in range(1, modes + 1):
        a, b = r.normal(size=2)
        f += a * np.cos(2 * np.pi * m * x / grid.length) + b * np.sin(2 * np.pi * m * x / grid.length)
    return f
