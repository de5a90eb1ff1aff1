"""
Unit tests for the decay-rate bound, the Volterra cone system and the
perturbation experiment.
"""

import math

import numpy as np
import pytest

from hypbq.exceptions import StabilityError
from hypbq.models.experiment import SolverConfig
from hypbq.services.experiments import halving_deviation
from hypbq.services.forcing import ForcingSet, random_state
from hypbq.services.picard import MildProblem
from hypbq.services.stability import (
    KernelTerm,
    cone_kernel,
    cone_operator_norm,
    converged_solve,
    delta_bound,
    fit_decay,
    perturbation_experiment,
    volterra_matrix,
    volterra_solve,
)


class TestDeltaBound:
    """Test suite for delta_bound and cone_operator_norm."""

    def test_zero_data_gives_half_gamma(self):
        """Test rho = 0 and h = 0 leave gamma / 2."""
        assert delta_bound(0.5, 0.0, 1.0, 0.5, 0.75, 0.0) == pytest.approx(0.25)

    def test_bound_decreases_with_rho(self):
        """Test a larger ball admits a smaller decay rate."""
        small = delta_bound(0.5, 1e-6, 1.0, 0.5, 0.75, 0.0)
        large = delta_bound(0.5, 1e-3, 1.0, 0.5, 0.75, 0.0)

        assert large < small <= 0.25

    def test_denominator_must_be_positive(self):
        """Test gamma <= 8 rho C_tilde raises SMALLNESS_VIOLATED."""
        with pytest.raises(StabilityError) as exc_info:
            delta_bound(0.5, 0.1, 1.0, 0.5, 0.75, 0.0)

        assert exc_info.value.error_code == "SMALLNESS_VIOLATED"

    def test_nonpositive_bound(self):
        """Test a coupling term above gamma raises DELTA_NONPOSITIVE."""
        with pytest.raises(StabilityError) as exc_info:
            delta_bound(0.5, 0.0, 1.0, 0.5, 0.75, 0.2)

        assert exc_info.value.error_code == "DELTA_NONPOSITIVE"

    def test_unknown_operator(self):
        """Test operators other than A and D are refused."""
        with pytest.raises(StabilityError) as exc_info:
            cone_operator_norm("B", 0.5, 0.1, 0.0, 1.0, 0.0, (0.5, 0.75))

        assert exc_info.value.error_code == "CONE_KIND"

    def test_norm_D_below_one_for_admissible_delta(self):
        """Test ||D|| < 1 when delta is below the bound."""
        bound = delta_bound(0.5, 1e-5, 1.0, 0.5, 0.75, 1e-3)

        norm = cone_operator_norm("D", 0.5, 0.5 * bound, 1e-5, 1.0, 1e-3, (0.5, 0.75))

        assert 0.0 < norm < 1.0


class TestVolterra:
    """Test suite for the product-trapezoid Volterra solver."""

    def test_kernel_validation(self):
        """Test negative coefficients and exponents outside (0, 1) are refused."""
        with pytest.raises(StabilityError):
            KernelTerm(-1.0, 0.5)
        with pytest.raises(StabilityError):
            KernelTerm(1.0, 0.5, exponent=1.0)

    def test_constant_kernel_quadrature(self):
        """Test int_0^t c ds is integrated exactly."""
        W = volterra_matrix([KernelTerm(0.5, 0.0)], 11, 0.1)

        np.testing.assert_allclose(W @ np.ones(11), 0.5 * np.arange(11) * 0.1, atol=1e-14)

    def test_singular_kernel_moments_exact(self):
        """Test int_0^t (1 + s^{-1/2}) ds = t + 2 sqrt(t)."""
        t = np.arange(21) * 0.05

        W = volterra_matrix([KernelTerm(1.0, 0.0, exponent=0.5)], 21, 0.05)

        np.testing.assert_allclose(W @ np.ones(21), t + 2.0 * np.sqrt(t), atol=1e-12)

    def test_exponential_kernel_linear_data(self):
        """Test int_0^t e^{-(t-s)} s ds = t - 1 + e^{-t}."""
        t = np.arange(11) * 0.1

        W = volterra_matrix([KernelTerm(1.0, 1.0)], 11, 0.1)

        np.testing.assert_allclose(W @ t, t - 1.0 + np.exp(-t), atol=1e-12)

    def test_solve_constant_kernel(self):
        """Test psi = 1 + 0.5 int psi gives e^{t/2}."""
        z = np.ones(101)

        psi = volterra_solve([KernelTerm(0.5, 0.0)], z, 0.01)

        assert psi[-1] == pytest.approx(math.exp(0.5), rel=1e-4)

    def test_non_contractive_rejected(self):
        """Test a row sum >= 1 raises VOLTERRA_NOT_CONTRACTIVE."""
        with pytest.raises(StabilityError) as exc_info:
            volterra_solve([KernelTerm(2.0, 0.0)], np.ones(101), 0.01)

        assert exc_info.value.error_code == "VOLTERRA_NOT_CONTRACTIVE"

    def test_cone_solution_dominates_data(self):
        """Test the cone system solution is at least its forcing term."""
        terms = cone_kernel(0.5, 1e-3, 1.0, 1e-2, (0.5, 0.75))
        z = np.exp(-0.5 * np.arange(41) * 0.1)

        psi = volterra_solve(terms, z, 0.1)

        assert len(terms) == 2
        assert np.all(psi >= z)
        assert psi[0] == pytest.approx(z[0])


class TestFitDecay:
    """Test suite for fit_decay."""

    def test_exact_exponential(self):
        """Test a clean exponential is recovered."""
        t = np.linspace(0.0, 5.0, 51)
        phi = 2.0 * np.exp(-0.3 * t)

        report = fit_decay(t, phi, window_start=1.0)

        assert report.delta_measured == pytest.approx(0.3)
        assert report.prefactor == pytest.approx(2.0)
        assert report.r_squared == pytest.approx(1.0)
        assert report.envelope_holds
        assert report.monotone_after_transient
        assert report.passed
        assert report.fit_window == pytest.approx([1.0, 5.0])

    def test_zero_perturbation(self):
        """Test phi = 0 skips the fit."""
        report = fit_decay(np.linspace(0.0, 1.0, 5), np.zeros(5), 0.0)

        assert report.delta_measured is None
        assert report.passed

    def test_too_few_points(self):
        """Test fewer than three usable points fail the fit."""
        t = np.linspace(0.0, 1.0, 5)

        report = fit_decay(t, np.exp(-t), window_start=0.8)

        assert not report.passed
        assert report.delta_measured is None

    def test_growth_fails(self):
        """Test a growing phi gives a negative rate and fails."""
        t = np.linspace(0.0, 2.0, 21)

        report = fit_decay(t, np.exp(0.2 * t), window_start=0.0)

        assert report.delta_measured == pytest.approx(-0.2)
        assert not report.passed


class TestPerturbationExperiment:
    """Test suite for perturbation_experiment."""

    def test_unforced_perturbation_decays(self, grid2, semigroup_cfg):
        """Test a small perturbation of small data decays exponentially."""
        rng = np.random.default_rng(17)
        problem = MildProblem(random_state(grid2, rng, amplitude=1e-3),
                              ForcingSet.zero(grid2), 4.0)
        perturbation = random_state(grid2, rng, amplitude=1e-4)
        solver = SolverConfig(p=4.0, rho=0.02, t_max=2.0, dt=0.125, picard_tol=1e-12,
                              max_iters=30)

        report = perturbation_experiment(problem, perturbation, solver, semigroup_cfg,
                                         fit_window_start=0.5)

        assert report.delta_measured is not None and report.delta_measured > 0
        assert report.phi[-1] < report.phi[0]
        assert report.gamma == pytest.approx(0.125)
        assert len(report.times) == 17

    @pytest.fixture
    def decay_setup(self, grid2):
        rng = np.random.default_rng(17)
        problem = MildProblem(random_state(grid2, rng, amplitude=1e-3),
                              ForcingSet.zero(grid2), 4.0)
        perturbation = random_state(grid2, rng, amplitude=1e-4)
        solver = SolverConfig(p=4.0, rho=0.02, t_max=1.0, dt=0.125, picard_tol=1e-12,
                              max_iters=30)
        return problem, perturbation, solver

    def test_precomputed_base_gives_same_decay(self, decay_setup, semigroup_cfg):
        """Test passing the base solution reproduces the run that solves it itself."""
        problem, perturbation, solver = decay_setup
        base = converged_solve(problem, solver, semigroup_cfg)

        fresh = perturbation_experiment(problem, perturbation, solver, semigroup_cfg, 0.25)
        reused = perturbation_experiment(problem, perturbation, solver, semigroup_cfg, 0.25,
                                         base=base)

        np.testing.assert_allclose(reused.phi, fresh.phi, rtol=1e-12, atol=0.0)

    def test_base_on_other_nodes_rejected(self, decay_setup, semigroup_cfg):
        """Test a base solution on different time nodes is refused."""
        problem, perturbation, solver = decay_setup
        short = solver.model_copy(update={"t_max": 0.5})
        base = converged_solve(problem, short, semigroup_cfg)

        with pytest.raises(StabilityError) as exc_info:
            perturbation_experiment(problem, perturbation, solver, semigroup_cfg, base=base)
        assert exc_info.value.error_code == "TRAJECTORY_MISMATCH"

    def test_halved_perturbation_halves_distance(self, decay_setup, semigroup_cfg):
        """Test phi scales by one half within 10% when the perturbation is halved."""
        problem, perturbation, solver = decay_setup
        base = converged_solve(problem, solver, semigroup_cfg)

        full = perturbation_experiment(problem, perturbation, solver, semigroup_cfg, 0.25,
                                       base=base)
        half = perturbation_experiment(problem, perturbation * 0.5, solver, semigroup_cfg,
                                       0.25, base=base)

        assert halving_deviation(full, half) <= 0.1
