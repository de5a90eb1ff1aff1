"""
Unit tests for trajectories and the Duhamel operators.
"""

import numpy as np
import pytest

from hypbq.exceptions import DuhamelError
from hypbq.models.experiment import (
    ForcingConfig,
    SemigroupConfig,
    TensorProfileConfig,
    VectorProfileConfig,
)
from hypbq.services.duhamel import (
    Trajectory,
    bilinear_trajectory,
    coupling_integrand,
    coupling_trajectory,
    direct_linear_solve,
    duhamel_integral,
    evaluate_nodes,
    forcing_trajectory,
    free_evolution,
    linear_mild_solution,
    op_B,
    op_T_forcing,
    op_Th,
)
from hypbq.services.forcing import ForcingSet, random_state
from hypbq.services.geometry import (
    ScalarField,
    State,
    VectorField,
    build_grid,
    div_vector,
    lp_norm,
    product_norm,
)
from hypbq.services.semigroup import generator_solve, matrix_semigroup_apply

NODES = np.linspace(0.0, 0.25, 5)


def _random_trajectory(grid, rng, amplitude=1.0):
    return Trajectory.from_states(NODES, [random_state(grid, rng, amplitude) for _ in NODES])


def _source_forcing(grid):
    return ForcingSet(grid, ForcingConfig(
        h=VectorProfileConfig(amplitude=0.5, center_tau=1.0),
        F=TensorProfileConfig(amplitude=0.2, structure="shear", angular_mode=1),
        f=VectorProfileConfig(amplitude=0.3, center_tau=1.2, modulation="cosine", period=1.0),
    ))


class TestTrajectory:
    """Test suite for the Trajectory container."""

    def test_length_mismatch(self, grid2):
        """Test one state per node is required."""
        with pytest.raises(DuhamelError) as exc_info:
            Trajectory(grid2, NODES, (State.zeros(grid2),))

        assert exc_info.value.error_code == "TRAJECTORY_SHAPE"

    def test_non_uniform_nodes(self, grid2):
        """Test uneven time steps are refused."""
        nodes = np.array([0.0, 0.1, 0.3])

        with pytest.raises(DuhamelError) as exc_info:
            Trajectory.zeros(grid2, nodes)

        assert exc_info.value.error_code == "TRAJECTORY_SPACING"

    def test_foreign_grid(self, grid2):
        """Test states from another grid are refused."""
        other = build_grid(2, 4.0, 16, 8)

        with pytest.raises(DuhamelError) as exc_info:
            Trajectory(grid2, NODES[:1], (State.zeros(other),))

        assert exc_info.value.error_code == "TRAJECTORY_GRID"

    def test_from_states_stamps_times(self, grid2, rng):
        """Test states are re-stamped with their node times."""
        traj = _random_trajectory(grid2, rng)

        assert [s.t for s in traj.states] == list(NODES)
        assert traj.dt == pytest.approx(0.0625)

    def test_arithmetic_and_norms(self, grid2, rng):
        """Test sums and sup norms act node by node."""
        traj = _random_trajectory(grid2, rng)

        doubled = traj + traj
        zero = traj - traj

        np.testing.assert_allclose(doubled.norms(4.0), 2.0 * traj.norms(4.0))
        assert zero.sup_norm(4.0) == 0.0
        assert (traj * 3.0).sup_norm(2.0) == pytest.approx(3.0 * traj.sup_norm(2.0))

    def test_mismatched_nodes(self, grid2):
        """Test trajectories on different nodes cannot be combined."""
        a = Trajectory.zeros(grid2, NODES)
        b = Trajectory.zeros(grid2, NODES * 2.0)

        with pytest.raises(DuhamelError) as exc_info:
            _ = a + b

        assert exc_info.value.error_code == "TRAJECTORY_MISMATCH"


class TestDuhamelIntegral:
    """Test suite for duhamel_integral."""

    def test_unknown_rule(self, grid2, semigroup_cfg):
        """Test an unknown endpoint rule raises DuhamelError."""
        with pytest.raises(DuhamelError) as exc_info:
            duhamel_integral([State.zeros(grid2)], 0.1, semigroup_cfg, endpoint_rule="simpson")

        assert exc_info.value.error_code == "ENDPOINT_RULE"

    def test_refinement_must_be_positive(self, grid2, semigroup_cfg):
        """Test refinement < 1 raises DuhamelError."""
        with pytest.raises(DuhamelError):
            duhamel_integral([State.zeros(grid2)], 0.1, semigroup_cfg, refinement=0)

    def test_empty_input(self, semigroup_cfg):
        """Test no integrands give no values."""
        assert duhamel_integral([], 0.1, semigroup_cfg) == []

    def test_starts_at_zero(self, grid2, rng, semigroup_cfg):
        """Test I_0 = 0 and one value per node."""
        traj = _random_trajectory(grid2, rng)

        out = duhamel_integral(list(traj.states), traj.dt, semigroup_cfg)

        assert len(out) == len(traj)
        assert product_norm(out[0], 4.0) == 0.0
        assert [s.t for s in out] == pytest.approx(list(NODES))

    def test_rules_agree_on_smooth_data(self, grid2, rng, semigroup_cfg):
        """Test the three quadrature rules agree closely on smooth data."""
        g = random_state(grid2, rng)
        integrands = [(g * float(np.cos(t))).with_time(float(t)) for t in NODES]

        graded = duhamel_integral(integrands, 0.0625, semigroup_cfg, "graded")[-1]
        trapezoid = duhamel_integral(integrands, 0.0625, semigroup_cfg, "trapezoid")[-1]
        exponential = duhamel_integral(integrands, 0.0625, semigroup_cfg, "exponential")[-1]

        scale = product_norm(exponential, 2.0)
        assert product_norm(graded - trapezoid, 2.0) <= 0.2 * scale
        assert product_norm(exponential - trapezoid, 2.0) <= 0.2 * scale

    def test_exponential_rule_exact_for_constant_source(self, grid2, rng, semigroup_cfg):
        """Test a constant integrand integrates to A^{-1}(g - E^n g) with E the step propagator."""
        g = random_state(grid2, rng)
        integrands = [g.with_time(float(t)) for t in NODES]

        out = duhamel_integral(integrands, 0.0625, semigroup_cfg, "exponential")[-1]

        propagated = g
        for _ in range(len(NODES) - 1):
            propagated = matrix_semigroup_apply(propagated, 0.0625, semigroup_cfg)
        expected = generator_solve(g - propagated)
        scale = product_norm(expected, 2.0)
        assert product_norm(out - expected, 2.0) <= 1e-9 * scale

    def test_finer_quadrature_changes_bilinear_term_little(self, grid2, rng, semigroup_cfg):
        """Test doubling the quadrature points moves B(v, v)(1) by at most 1e-4 relative."""
        x, y = random_state(grid2, rng, 1e-2), random_state(grid2, rng, 1e-2)
        nodes = np.linspace(0.0, 1.0, 65)
        traj = Trajectory.from_states(
            nodes, [x * float(np.cos(t)) + y * float(np.sin(t)) for t in nodes])

        coarse = op_B(traj, traj, 64, semigroup_cfg)
        fine = op_B(traj, traj, 64, semigroup_cfg, refinement=2)

        assert product_norm(fine - coarse, 2.0) <= 1e-4 * product_norm(coarse, 2.0)

    def test_forcing_quadrature_converges_at_second_order(self, grid2):
        """Test halving the step reduces the change of T(F; f)(1/2) by about four."""
        # 1/256 substeps at every step size keep the propagator fixed
        cfg = SemigroupConfig(cn_steps_per_unit_time=256)
        forcing = _source_forcing(grid2)
        values = [forcing_trajectory(forcing, np.linspace(0.0, 0.5, n + 1), cfg)[-1]
                  for n in (4, 8, 16)]

        first = product_norm(values[0] - values[1], 2.0)
        second = product_norm(values[1] - values[2], 2.0)
        assert np.log2(first / second) >= 1.7

    def test_linear_in_integrand(self, grid2, rng, semigroup_cfg):
        """Test I(2g) = 2 I(g)."""
        traj = _random_trajectory(grid2, rng)

        once = duhamel_integral(list(traj.states), traj.dt, semigroup_cfg)[-1]
        twice = duhamel_integral(list((traj * 2.0).states), traj.dt, semigroup_cfg)[-1]

        np.testing.assert_allclose(twice.theta.values, 2.0 * once.theta.values,
                                   rtol=1e-10, atol=1e-14)

    def test_threaded_evaluation_matches_serial(self, grid2, rng):
        """Test evaluate_nodes returns node order with threads."""
        states = [random_state(grid2, rng) for _ in range(4)]

        serial = evaluate_nodes(lambda k: states[k], 4)
        threaded = evaluate_nodes(lambda k: states[k], 4, max_workers=2)

        assert all(a is b for a, b in zip(serial, threaded))


class TestOperators:
    """Test suite for B, T_h and T(F; f)."""

    def test_bilinear_vanishes_at_start(self, grid2, rng, semigroup_cfg):
        """Test B(v, w)(t_0) = 0."""
        traj = _random_trajectory(grid2, rng)

        assert product_norm(op_B(traj, traj, 0, semigroup_cfg), 4.0) == 0.0

    def test_bilinear_is_linear_in_first_argument(self, grid2, rng, semigroup_cfg):
        """Test B(2v, w) = 2 B(v, w)."""
        v = _random_trajectory(grid2, rng)
        w = _random_trajectory(grid2, rng)

        once = op_B(v, w, 4, semigroup_cfg)
        twice = op_B(v * 2.0, w, 4, semigroup_cfg)

        np.testing.assert_allclose(twice.u.components, 2.0 * once.u.components,
                                   rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(twice.theta.values, 2.0 * once.theta.values,
                                   rtol=1e-9, atol=1e-12)

    def test_bilinear_velocity_divergence_free(self, grid2, rng, semigroup_cfg):
        """Test the velocity part of B stays in the solenoidal subspace."""
        traj = _random_trajectory(grid2, rng)

        out = bilinear_trajectory(traj, traj, semigroup_cfg)[-1]

        assert lp_norm(div_vector(out.u), 2.0) <= 1e-6 * lp_norm(out.u, 2.0)

    def test_op_B_matches_trajectory_tail(self, grid2, rng, semigroup_cfg):
        """Test op_B at index n equals the n-th trajectory value."""
        traj = _random_trajectory(grid2, rng)

        whole = bilinear_trajectory(traj, traj, semigroup_cfg)
        single = op_B(traj, traj, 2, semigroup_cfg)

        np.testing.assert_allclose(single.theta.values, whole[2].theta.values, atol=1e-13)

    def test_coupling_has_no_temperature_part(self, grid2, rng, semigroup_cfg):
        """Test T_h(eta) has a zero theta-component."""
        traj = _random_trajectory(grid2, rng)

        out = op_Th(traj, _source_forcing(grid2), 4, semigroup_cfg)

        assert not np.any(out.theta.values)
        assert np.any(out.u.components)

    def test_coupling_small_time_is_leading_taylor_term(self, grid2, semigroup_cfg):
        """Test T_h(eta)(t) = t P(eta h) within 5% for constant eta, h at t = 0.01."""
        forcing = ForcingSet(grid2, ForcingConfig(
            h=VectorProfileConfig(amplitude=1.0, center_tau=1.5, width=1.0,
                                  direction="angular"),
        ))
        nodes = np.array([0.0, 0.005, 0.01])
        eta = State(VectorField.zeros(grid2), ScalarField(grid2, np.ones(grid2.shape)))
        eta_traj = Trajectory.from_states(nodes, [eta] * 3)

        out = op_Th(eta_traj, forcing, 2, semigroup_cfg)

        leading = coupling_integrand(eta.theta, forcing.h(0.0)).u * 0.01
        assert lp_norm(out.u - leading, 2.0) <= 0.05 * lp_norm(leading, 2.0)

    def test_coupling_without_buoyancy(self, grid2, rng, semigroup_cfg):
        """Test h = 0 gives T_h = 0."""
        traj = _random_trajectory(grid2, rng)

        out = coupling_trajectory(traj, ForcingSet.zero(grid2), semigroup_cfg)

        assert max(product_norm(s, 4.0) for s in out) == 0.0

    def test_forcing_index_checked(self, grid2, semigroup_cfg):
        """Test an index past the last node raises DuhamelError."""
        with pytest.raises(DuhamelError) as exc_info:
            op_T_forcing(_source_forcing(grid2), NODES, 5, semigroup_cfg)

        assert exc_info.value.error_code == "TIME_INDEX"

    def test_forcing_matches_direct_solve(self, grid2, semigroup_cfg):
        """Test the Duhamel forcing term agrees with a direct theta-scheme solve."""
        forcing = _source_forcing(grid2)
        nodes = np.linspace(0.0, 0.5, 33)

        duhamel = forcing_trajectory(forcing, nodes, semigroup_cfg)
        direct = direct_linear_solve(State.zeros(grid2), None, forcing, nodes, semigroup_cfg)

        err = product_norm(duhamel[-1] - direct[-1], 2.0)
        assert err <= 1e-2 * product_norm(direct[-1], 2.0)


class TestLinearMildSolution:
    """Test suite for free_evolution and linear_mild_solution."""

    def test_free_evolution_starts_at_data(self, grid2, rng, semigroup_cfg):
        """Test the first node is the initial state."""
        x0 = random_state(grid2, rng)

        traj = free_evolution(x0, NODES, semigroup_cfg)

        np.testing.assert_array_equal(traj[0].theta.values, x0.theta.values)
        assert traj.norms(2.0)[-1] < traj.norms(2.0)[0]

    def test_bound_holds_with_generous_constants(self, grid2, rng, semigroup_cfg):
        """Test the a priori bound check reports measured and bound."""
        x0 = random_state(grid2, rng, amplitude=0.01)
        eta = _random_trajectory(grid2, rng, amplitude=0.01)

        solution, check = linear_mild_solution(x0, eta, _source_forcing(grid2), NODES,
                                               semigroup_cfg, 4.0, (10.0, 10.0, 10.0))

        assert check.measured == pytest.approx(solution.sup_norm(4.0))
        assert check.holds
        assert check.bound > check.measured

    def test_zero_data_gives_zero(self, grid2, semigroup_cfg):
        """Test all-zero inputs produce the zero trajectory."""
        solution, check = linear_mild_solution(State.zeros(grid2), None, ForcingSet.zero(grid2),
                                               NODES, semigroup_cfg, 4.0, (1.0, 1.0, 1.0))

        assert solution.sup_norm(4.0) == 0.0
        assert check.bound == 0.0
        assert check.holds

    def test_coupling_nodes_must_match(self, grid2, semigroup_cfg):
        """Test eta on different nodes raises DuhamelError."""
        eta = Trajectory.zeros(grid2, NODES * 2.0)

        with pytest.raises(DuhamelError):
            linear_mild_solution(State.zeros(grid2), eta, ForcingSet.zero(grid2), NODES,
                                 semigroup_cfg, 4.0, (1.0, 1.0, 1.0))

    def test_superposition(self, grid2, rng, semigroup_cfg):
        """Test the solution is affine in the initial data and linear in eta."""
        forcing = _source_forcing(grid2)
        xa, xb = random_state(grid2, rng, 0.1), random_state(grid2, rng, 0.1)
        eta_a = _random_trajectory(grid2, rng, 0.1)
        eta_b = _random_trajectory(grid2, rng, 0.1)
        constants = (1.0, 1.0, 1.0)

        def solve(x0, eta):
            return linear_mild_solution(x0, eta, forcing, NODES, semigroup_cfg, 4.0,
                                        constants)[0]

        combined = solve(xa + xb, eta_a + eta_b)
        parts = solve(xa, eta_a) + solve(xb, eta_b) - solve(State.zeros(grid2),
                                                             Trajectory.zeros(grid2, NODES))

        scale = combined.sup_norm(2.0)
        assert (combined - parts).sup_norm(2.0) <= 1e-10 * scale
