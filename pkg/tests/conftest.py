"""
Shared fixtures: small grids and fast semigroup/solver settings.

Unit tests run on 16-cell radial grids; the desk-scale grids live in
tests/integration.
"""

import numpy as np
import pytest

from hypbq.models.experiment import SemigroupConfig, SolverConfig
from hypbq.services.geometry import build_grid


@pytest.fixture
def grid2():
    """H^2 grid, 16 radial cells x 8 angular nodes on [0, 4]."""
    return build_grid(2, 4.0, 16, 8)


@pytest.fixture
def grid3():
    """Radial H^3 grid, 16 cells on [0, 4]."""
    return build_grid(3, 4.0, 16, 1)


@pytest.fixture
def rng():
    """Seeded generator for random fields."""
    return np.random.default_rng(20240611)


@pytest.fixture
def semigroup_cfg():
    """Crank-Nicolson with the minimum substep density."""
    return SemigroupConfig(cn_steps_per_unit_time=16)


@pytest.fixture
def solver_cfg():
    """Short Picard horizon: four steps of 1/16."""
    return SolverConfig(p=4.0, rho=0.05, t_max=0.25, dt=0.0625, picard_tol=1e-10,
                        max_iters=30)


@pytest.fixture
def bump():
    """Factory of Gaussian bump profiles exp(-((tau - c)/w)^2) cos(m phi)."""
    def make(center: float, width: float, mode: int = 0):
        return lambda tau, phi: np.exp(-((tau - center) / width) ** 2) * np.cos(mode * phi)
    return make
