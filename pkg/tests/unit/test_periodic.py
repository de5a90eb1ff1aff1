"""
Unit tests for the periodic-orbit iteration.
"""

import numpy as np
import pytest

from hypbq.exceptions import PeriodicSolveError
from hypbq.models.experiment import ForcingConfig, SolverConfig, VectorProfileConfig
from hypbq.services.forcing import ForcingSet, random_state
from hypbq.services.geometry import State, product_norm
from hypbq.services.periodic import cauchy_diagnostics, periodic_solve
from hypbq.services.picard import MildProblem
from hypbq.services.stability import perturbation_experiment


@pytest.fixture
def window_solver():
    """One period of four steps per Picard window."""
    return SolverConfig(p=4.0, rho=0.02, t_max=1.0, dt=0.25, picard_tol=1e-12, max_iters=30)


def _geometric(limit, direction, ratio, n):
    return [(limit + direction * ratio ** k).with_time(float(k)) for k in range(n)]


class TestCauchyDiagnostics:
    """Test suite for cauchy_diagnostics."""

    def test_geometric_sequence_extrapolated(self, grid2, rng):
        """Test the extrapolated limit of x* + r^n e is x*."""
        limit = random_state(grid2, rng)
        snapshots = _geometric(limit, random_state(grid2, rng), 0.5, 6)

        report, estimate = cauchy_diagnostics(snapshots, 4.0)

        assert report.fitted_ratio == pytest.approx(0.5)
        assert report.contracting
        assert report.extrapolated
        assert product_norm(estimate - limit, 4.0) <= 1e-12 * product_norm(limit, 4.0)
        assert estimate.t == snapshots[-1].t

    def test_pairwise_matrix(self, grid2, rng):
        """Test pairwise distances are symmetric with a zero diagonal."""
        snapshots = _geometric(random_state(grid2, rng), random_state(grid2, rng), 0.5, 4)

        report, _ = cauchy_diagnostics(snapshots, 4.0)

        pairwise = np.array(report.pairwise)
        assert pairwise.shape == (4, 4)
        np.testing.assert_allclose(pairwise, pairwise.T)
        assert np.all(np.diag(pairwise) == 0.0)
        assert report.differences == pytest.approx(list(np.diag(pairwise, 1)))

    def test_growing_sequence_not_extrapolated(self, grid2, rng):
        """Test r >= 1 clears the contracting flag and keeps the last snapshot."""
        snapshots = _geometric(random_state(grid2, rng), random_state(grid2, rng), 2.0, 4)

        report, estimate = cauchy_diagnostics(snapshots, 4.0)

        assert not report.contracting
        assert not report.extrapolated
        assert estimate is snapshots[-1]

    def test_too_few_snapshots(self, grid2):
        """Test fewer than three snapshots raise PeriodicSolveError."""
        with pytest.raises(PeriodicSolveError) as exc_info:
            cauchy_diagnostics([State.zeros(grid2)] * 2, 4.0)

        assert exc_info.value.error_code == "TOO_FEW_SNAPSHOTS"


class TestPeriodicSolve:
    """Test suite for periodic_solve."""

    def test_zero_data_is_periodic(self, grid2, window_solver, semigroup_cfg):
        """Test zero data converges in one window to the zero orbit."""
        problem = MildProblem(State.zeros(grid2), ForcingSet.zero(grid2), 4.0)

        orbit, report = periodic_solve(problem, window_solver, semigroup_cfg, period=1.0)

        assert report.converged
        assert report.windows == 1
        assert report.periodicity_defect == 0.0
        assert report.relative_defect == 0.0
        assert orbit.time_nodes[-1] == pytest.approx(1.0)
        assert report.smallness is not None

    def test_window_cap(self, grid2, window_solver, semigroup_cfg):
        """Test max_windows is enforced."""
        forcing = ForcingSet(grid2, ForcingConfig(
            f=VectorProfileConfig(amplitude=1e-3, modulation="cosine", period=1.0)), period=1.0)
        problem = MildProblem(State.zeros(grid2), forcing, 4.0)

        with pytest.raises(PeriodicSolveError) as exc_info:
            periodic_solve(problem, window_solver, semigroup_cfg, period=1.0,
                           periodic_tol=1e-14, max_windows=3)

        assert exc_info.value.error_code == "MAX_WINDOWS"

    def test_ratio_bound_from_measured_rate(self, grid2, window_solver, semigroup_cfg):
        """Test the snapshot ratio bound is exp(-delta T) times the safety factor."""
        problem = MildProblem(State.zeros(grid2), ForcingSet.zero(grid2), 4.0)

        _, report = periodic_solve(problem, window_solver, semigroup_cfg, period=1.0,
                                   delta_measured=0.5)

        assert report.ratio_bound == pytest.approx(np.exp(-0.5) * 1.2)
        assert report.ratio_bound_holds

    def test_forced_ratios_respect_measured_decay(self, grid2, window_solver, semigroup_cfg):
        """Test snapshot ratios under small periodic forcing stay below exp(-delta T) * 1.2."""
        rng = np.random.default_rng(29)
        forcing = ForcingSet(grid2, ForcingConfig(
            f=VectorProfileConfig(amplitude=1e-3, center_tau=1.5, modulation="cosine",
                                  period=1.0)), period=1.0)
        problem = MildProblem(random_state(grid2, rng, amplitude=1e-3), forcing, 4.0)
        decay_solver = window_solver.model_copy(update={"t_max": 4.0})
        decay = perturbation_experiment(problem, random_state(grid2, rng, amplitude=1e-4),
                                        decay_solver, semigroup_cfg, fit_window_start=1.5)

        _, report = periodic_solve(problem, window_solver, semigroup_cfg, period=1.0,
                                   periodic_tol=1e-9, max_windows=40,
                                   delta_measured=decay.delta_measured)

        assert decay.delta_measured is not None and decay.delta_measured > 0
        assert report.converged
        assert len(report.ratios) >= 3
        assert report.ratio_bound_holds is True
