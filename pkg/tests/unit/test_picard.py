"""
Unit tests for the Picard iteration and the smallness hypotheses.
"""

import math

import numpy as np
import pytest

from hypbq.exceptions import FieldError
from hypbq.models.experiment import ForcingConfig, VectorProfileConfig
from hypbq.services.duhamel import Trajectory, free_evolution
from hypbq.services.forcing import ForcingSet, random_state
from hypbq.services.geometry import State
from hypbq.services.picard import (
    DataNorms,
    MildProblem,
    fit_discrete_constants,
    mapping_bound,
    phi_map,
    picard_solve,
    smallness_check,
)


@pytest.fixture
def small_problem(grid2):
    """Small buoyancy-coupled problem well inside the contraction regime."""
    rng = np.random.default_rng(3)
    forcing = ForcingSet(grid2, ForcingConfig(h=VectorProfileConfig(amplitude=0.05)))
    return MildProblem(random_state(grid2, rng, amplitude=1e-2), forcing, 4.0)


class TestPhiMap:
    """Test suite for one application of the fixed-point map."""

    def test_zero_input_gives_free_evolution(self, grid2, rng, solver_cfg, semigroup_cfg):
        """Test Phi(0) = e^{-tA} x0 without forcing."""
        problem = MildProblem(random_state(grid2, rng), ForcingSet.zero(grid2), 4.0)
        nodes = problem.time_nodes(solver_cfg)

        out = phi_map(Trajectory.zeros(grid2, nodes), problem, solver_cfg, semigroup_cfg)

        free = free_evolution(problem.initial, nodes, semigroup_cfg)
        np.testing.assert_allclose(out[-1].theta.values, free[-1].theta.values, atol=1e-14)

    def test_sources_cached_per_node_set(self, small_problem, solver_cfg):
        """Test forcing integrands are built once per node set."""
        nodes = small_problem.time_nodes(solver_cfg)

        assert small_problem.sources(nodes) is small_problem.sources(nodes.copy())

    def test_time_nodes_offset(self, small_problem, solver_cfg):
        """Test nodes start at t0 with spacing dt."""
        nodes = small_problem.time_nodes(solver_cfg, t0=2.0)

        assert nodes.size == solver_cfg.n_steps + 1
        assert nodes[0] == 2.0
        assert nodes[-1] == pytest.approx(2.25)


class TestPicardSolve:
    """Test suite for picard_solve."""

    def test_zero_data_converges_immediately(self, grid2, solver_cfg, semigroup_cfg):
        """Test zero data stops after one iterate with the zero solution."""
        problem = MildProblem(State.zeros(grid2), ForcingSet.zero(grid2), 4.0)

        traj, report = picard_solve(problem, solver_cfg, semigroup_cfg)

        assert report.converged
        assert report.iterations == 1
        assert traj.sup_norm(4.0) == 0.0
        assert report.final_residual == 0.0

    def test_small_data_contracts(self, small_problem, solver_cfg, semigroup_cfg):
        """Test small data converges with a contraction ratio below one."""
        traj, report = picard_solve(small_problem, solver_cfg, semigroup_cfg)

        assert report.converged
        assert not report.contraction_flagged
        assert report.contraction_ratio is not None and report.contraction_ratio < 1.0
        assert report.final_residual < 1e-8
        assert report.rho_effective == pytest.approx(max(report.sup_norms))
        assert traj.sup_norm(4.0) <= solver_cfg.rho

    def test_limit_independent_of_starting_iterate(self, small_problem, solver_cfg,
                                                   semigroup_cfg):
        """Test iterating from zero and from a scaled free evolution reaches the same solution."""
        nodes = small_problem.time_nodes(solver_cfg)
        start = free_evolution(small_problem.initial, nodes, semigroup_cfg) * 3.0

        from_zero, first = picard_solve(small_problem, solver_cfg, semigroup_cfg)
        from_free, second = picard_solve(small_problem, solver_cfg, semigroup_cfg,
                                         initial_guess=start)

        assert first.converged and second.converged
        assert (from_zero - from_free).sup_norm(4.0) < 10.0 * solver_cfg.picard_tol

    def test_track_constants(self, small_problem, solver_cfg, semigroup_cfg):
        """Test tracked runs report fitted M, N and the ratio bound."""
        _, report = picard_solve(small_problem, solver_cfg, semigroup_cfg, track_constants=True)

        assert report.M_fit is not None and report.M_fit > 0
        assert report.N_fit is not None and report.N_fit > 0
        assert report.fitted_ratio_bound == pytest.approx(
            2.0 * report.M_fit * report.rho_effective + report.N_fit * report.h_norm)

    def test_exponent_must_exceed_dimension(self, grid2, solver_cfg, semigroup_cfg):
        """Test p <= d raises FieldError."""
        problem = MildProblem(State.zeros(grid2), ForcingSet.zero(grid2), 2.0)

        with pytest.raises(FieldError) as exc_info:
            picard_solve(problem, solver_cfg, semigroup_cfg)

        assert exc_info.value.error_code == "EXPONENT_NOT_SUPERCRITICAL"

    def test_large_data_flagged(self, grid2, rng, solver_cfg, semigroup_cfg):
        """Test large data stops without convergence and is flagged."""
        problem = MildProblem(random_state(grid2, rng, amplitude=1000.0),
                              ForcingSet.zero(grid2), 4.0)

        _, report = picard_solve(problem, solver_cfg, semigroup_cfg)

        assert not report.converged
        assert report.contraction_flagged
        assert report.final_residual is None

    def test_iteration_cap(self, small_problem, solver_cfg, semigroup_cfg):
        """Test max_iters bounds the number of iterates."""
        capped = solver_cfg.model_copy(update={"max_iters": 2})

        _, report = picard_solve(small_problem, capped, semigroup_cfg)

        assert report.iterations == 2
        assert not report.converged


class TestSmallness:
    """Test suite for smallness_check and mapping_bound."""

    def test_admissible_data(self):
        """Test small data passes every condition."""
        report = smallness_check(DataNorms(0.0, 0.1, 0.0), C=1.0, M=0.5, N=1.0, rho=0.4)

        assert report.passed
        assert report.failed() == []
        assert [c.name for c in report.conditions] == [
            "contraction", "ball_radius", "initial_data", "buoyancy", "forcing"]

    def test_large_ball_fails(self):
        """Test rho >= 1/(4M) fails the ball and contraction conditions."""
        report = smallness_check(DataNorms(0.0, 0.0, 0.0), C=1.0, M=1.0, N=1.0, rho=0.6)

        assert not report.passed
        assert set(report.failed()) >= {"contraction", "ball_radius"}

    def test_periodic_uses_c_squared(self):
        """Test the periodic variant bounds x0 by rho / (3 C^2)."""
        norms = DataNorms(0.05, 0.0, 0.0)

        plain = smallness_check(norms, C=2.0, M=0.1, N=1.0, rho=0.4)
        periodic = smallness_check(norms, C=2.0, M=0.1, N=1.0, rho=0.4, periodic=True)

        assert plain.conditions[2].rhs == pytest.approx(0.4 / 6.0)
        assert periodic.conditions[2].rhs == pytest.approx(0.4 / 12.0)
        assert plain.conditions[2].passed
        assert not periodic.conditions[2].passed

    def test_margin(self):
        """Test margin = rhs - lhs."""
        report = smallness_check(DataNorms(0.01, 0.1, 0.0), C=1.0, M=0.5, N=1.0, rho=0.4)

        for condition in report.conditions:
            if math.isfinite(condition.rhs):
                assert condition.margin == pytest.approx(condition.rhs - condition.lhs)

    def test_mapping_bound(self):
        """Test C||x0|| + M(rho^2 + ||(F, f)||) + N rho ||h||."""
        norms = DataNorms(0.1, 0.2, 0.3)

        assert mapping_bound(norms, C=2.0, M=3.0, N=4.0, rho=0.5) == pytest.approx(
            0.2 + 3.0 * (0.25 + 0.3) + 4.0 * 0.5 * 0.2)

    def test_data_norms_of_problem(self, small_problem):
        """Test DataNorms collects the three data sizes."""
        norms = DataNorms.of(small_problem)

        assert norms.initial > 0
        assert norms.h == pytest.approx(small_problem.forcing.h_norm(4.0))
        assert norms.source == 0.0


class TestFittedConstants:
    """Test suite for fit_discrete_constants."""

    def test_fitted_constants_positive(self, small_problem, solver_cfg, semigroup_cfg):
        """Test every fitted constant is measured on the random suite."""
        fitted = fit_discrete_constants(small_problem, solver_cfg, semigroup_cfg,
                                        n_samples=2, seed=1)

        assert fitted.n_samples == 2
        assert fitted.C_fit >= 1.0
        assert fitted.M_fit > 0
        assert fitted.N_fit > 0
        assert fitted.M_forcing_fit > 0

    def test_fit_is_reproducible(self, small_problem, solver_cfg, semigroup_cfg):
        """Test equal seeds give equal constants."""
        a = fit_discrete_constants(small_problem, solver_cfg, semigroup_cfg, 1, seed=9)
        b = fit_discrete_constants(small_problem, solver_cfg, semigroup_cfg, 1, seed=9)

        assert a == b
