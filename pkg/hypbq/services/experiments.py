"""
Subcommand runners.

Each runner turns an ExperimentConfig into a RunOutcome: the structured
reports of the run, the acceptance checks that decide the exit status and
the CSV series for plotting. Nothing here touches the filesystem.
"""

import math
from typing import Dict, List, Optional

import numpy as np

from hypbq.models.experiment import ExperimentConfig
from hypbq.models.reports import DecayReport, RunOutcome, Series
from hypbq.services.constants import evaluate_constants
from hypbq.services.duhamel import Trajectory, direct_linear_solve, linear_mild_solution
from hypbq.services.forcing import ForcingSet, initial_state, random_state
from hypbq.services.geometry import State, build_grid, div_vector, lp_norm, product_norm
from hypbq.services.periodic import periodic_solve
from hypbq.services.picard import (
    DataNorms,
    MildProblem,
    fit_discrete_constants,
    picard_solve,
    smallness_check,
)
from hypbq.services.stability import converged_solve, perturbation_experiment
from hypbq.services.verification import run_semigroup_suite
from hypbq.utils.logging import get_logger

logger = get_logger(__name__)

COMMANDS = ("simulate", "verify-semigroup", "stability", "periodic", "constants")

RESIDUAL_MAX = 1e-6
DIVERGENCE_MAX = 1e-6
RATIO_SAFETY = 1.2
LINEAR_AGREEMENT_MAX = 2e-3
HALVING_TOLERANCE = 0.1
ORBIT_DEFECT_MAX = 1e-4
UNIQUENESS_FACTOR = 10.0


def build_problem(config: ExperimentConfig, period: Optional[float] = None) -> MildProblem:
    """Grid, forcing and projected initial state of a configured run."""
    m = config.manifold
    grid = build_grid(m.d, m.tau_max, m.n_tau, m.n_omega, m.cell_volumes)
    forcing = ForcingSet(grid, config.forcing, period)
    return MildProblem(initial_state(grid, config.initial), forcing, config.solver.p)


def trajectory_series(traj: Trajectory, p: float) -> Series:
    rows: List[List[float]] = [
        [float(t), lp_norm(s.u, p), lp_norm(s.theta, p), product_norm(s, p)]
        for t, s in zip(traj.time_nodes, traj.states)
    ]
    return Series(columns=["time", "norm_u", "norm_theta", "product_norm"], rows=rows)


def divergence_ratio(traj: Trajectory) -> float:
    """max_t ||div u||_2 / ||u||_2, zero for a vanishing velocity."""
    worst = 0.0
    for state in traj.states:
        size = lp_norm(state.u, 2.0)
        if size > 0:
            residual = lp_norm(div_vector(state.u), 2.0)
            worst = max(worst, residual / size)
    return worst


def _relative_l2(a: Trajectory, b: Trajectory, index: int) -> float:
    diff = product_norm(a[index] - b[index], 2.0)
    scale = max(product_norm(a[index], 2.0), product_norm(b[index], 2.0))
    return diff / scale if scale > 0 else diff


def run_simulate(config: ExperimentConfig) -> RunOutcome:
    """Picard solve with constant tracking, smallness audit and a linear cross-check up to t = 1."""
    problem = build_problem(config)
    solver, sg = config.solver, config.semigroup
    grid, p = problem.grid, problem.p
    norms = DataNorms.of(problem)
    constants = evaluate_constants(grid.d, p, sg.spectral_constant(grid.d), sg.C,
                                   rho=solver.rho, h_norm=norms.h)

    traj, report = picard_solve(problem, solver, sg, track_constants=True)
    report.smallness = smallness_check(norms, sg.C, constants.M_bilinear, constants.N,
                                       solver.rho)
    report.formula_ratio_bound = 2.0 * constants.M_bilinear * solver.rho + constants.N * norms.h
    report.max_divergence_ratio = divergence_ratio(traj)

    checks: Dict[str, bool] = {
        "converged": report.converged,
        "fixed_point_residual": (report.final_residual is not None
                                 and report.final_residual < RESIDUAL_MAX),
        "divergence_free": report.max_divergence_ratio <= DIVERGENCE_MAX,
    }
    if report.contraction_ratio is not None and report.fitted_ratio_bound:
        checks["ratio_within_fitted_bound"] = (
            report.contraction_ratio <= RATIO_SAFETY * report.fitted_ratio_bound)

    # linear problem with the computed temperature as coupling input
    k_one = min(len(traj) - 1, max(1, int(round(1.0 / solver.dt))))
    nodes = traj.time_nodes[:k_one + 1]
    eta = Trajectory.from_states(nodes, traj.states[:k_one + 1])
    fitted = fit_discrete_constants(problem, solver, sg, config.experiment.n_samples,
                                    config.experiment.seed)
    mild, bound = linear_mild_solution(
        problem.initial, eta, problem.forcing, nodes, sg, p,
        (fitted.C_fit, fitted.N_fit, fitted.M_forcing_fit), solver.endpoint_rule)
    direct = direct_linear_solve(problem.initial, eta, problem.forcing, nodes, sg)
    agreement = _relative_l2(mild, direct, k_one)
    checks["linear_duhamel_vs_direct"] = agreement <= LINEAR_AGREEMENT_MAX

    picard_rows: List[List[float]] = [
        [k + 1, s, d] for k, (s, d) in enumerate(zip(report.sup_norms, report.differences))
    ]
    return RunOutcome(
        command="simulate",
        passed=all(checks.values()),
        checks=checks,
        results={
            "iteration": report.model_dump(mode="json"),
            "constants": constants.model_dump(mode="json"),
            "fitted": fitted.model_dump(mode="json"),
            "linear": {
                "time": float(nodes[-1]),
                "relative_l2_duhamel_vs_direct": agreement,
                "bound": bound.model_dump(mode="json"),
            },
        },
        series={
            "trajectory": trajectory_series(traj, p),
            "picard": Series(columns=["iteration", "sup_norm", "difference"], rows=picard_rows),
        },
    )


def run_verify_semigroup(config: ExperimentConfig) -> RunOutcome:
    reports = run_semigroup_suite(config)
    checks = {r.name: r.passed for r in reports}
    rows: List[List[object]] = [[r.name, r.value, r.threshold, int(r.passed)] for r in reports]
    return RunOutcome(
        command="verify-semigroup",
        passed=all(checks.values()),
        checks=checks,
        results={"estimates": [r.model_dump(mode="json") for r in reports]},
        series={"estimates": Series(columns=["name", "value", "threshold", "passed"],
                                    rows=rows)},  # type: ignore[arg-type]
    )


def halving_deviation(full: DecayReport, half: DecayReport) -> float:
    """max_t |2 phi_half(t) / phi(t) - 1| over nodes where phi is above round-off."""
    phi = np.asarray(full.phi)
    phi_half = np.asarray(half.phi)
    mask = phi > 1e3 * np.finfo(float).eps * max(float(np.max(phi, initial=0.0)), 1e-300)
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(2.0 * phi_half[mask] / phi[mask] - 1.0)))


def run_stability(config: ExperimentConfig) -> RunOutcome:
    """Perturbation decay from x0 and x0 + eps, repeated with eps / 2 for linearity."""
    problem = build_problem(config)
    ex = config.experiment
    rng = np.random.default_rng(ex.seed)
    perturbation = random_state(problem.grid, rng, amplitude=ex.perturbation_scale)
    base = converged_solve(problem, config.solver, config.semigroup)
    decay = perturbation_experiment(problem, perturbation, config.solver, config.semigroup,
                                    ex.fit_window_start, ex.delta_fraction, base)
    half = perturbation_experiment(problem, perturbation * 0.5, config.solver,
                                   config.semigroup, ex.fit_window_start, ex.delta_fraction,
                                   base)
    deviation = halving_deviation(decay, half)
    checks = {
        "exponential_fit": decay.passed,
        "positive_rate": decay.delta_measured is not None and decay.delta_measured > 0,
        "envelope": decay.envelope_holds,
        "halving": deviation <= HALVING_TOLERANCE,
    }
    rows = [[t, a, b] for t, a, b in zip(decay.times, decay.phi, half.phi)]
    return RunOutcome(
        command="stability",
        passed=all(checks.values()),
        checks=checks,
        results={
            "decay": decay.model_dump(mode="json"),
            "halved": {"delta_measured": half.delta_measured,
                       "r_squared": half.r_squared, "max_deviation": deviation},
        },
        series={"decay": Series(columns=["time", "phi", "phi_half"], rows=rows)},
    )


def periodic_decay(config: ExperimentConfig, problem: MildProblem, perturbation: State,
                   period: float) -> DecayReport:
    """
    Perturbation decay of the forced problem over decay_horizon, by default
    three periods past the fit window start.
    """
    ex = config.experiment
    horizon = (ex.decay_horizon if ex.decay_horizon is not None
               else ex.fit_window_start + 3.0 * period)
    solver = config.solver.model_copy(update={"t_max": horizon})
    return perturbation_experiment(problem, perturbation, solver, config.semigroup,
                                   ex.fit_window_start, ex.delta_fraction)


def run_periodic(config: ExperimentConfig) -> RunOutcome:
    """
    Periodic orbit from the configured start and from a nearby one.

    The snapshot ratios are held against exp(-delta T) with delta fitted
    from a perturbation-decay run of the same forced problem.
    """
    ex = config.experiment
    period = ex.period if ex.period is not None else 1.0
    problem = build_problem(config, period)
    solver, sg = config.solver, config.semigroup
    rng = np.random.default_rng(ex.seed)
    perturbation = random_state(problem.grid, rng, amplitude=ex.perturbation_scale)
    decay = periodic_decay(config, problem, perturbation, period)
    orbit, report = periodic_solve(problem, solver, sg, period, ex.periodic_tol,
                                   ex.max_windows, decay.delta_measured)

    nearby = problem.with_initial(problem.initial + perturbation)
    other, _ = periodic_solve(nearby, solver, sg, period, ex.periodic_tol, ex.max_windows)
    distance = max(product_norm(a - b, problem.p) for a, b in zip(orbit.states, other.states))

    checks = {
        "converged": report.converged,
        "periodicity_defect": (report.relative_defect is not None
                               and report.relative_defect <= ORBIT_DEFECT_MAX),
        "local_uniqueness": distance <= UNIQUENESS_FACTOR * ex.periodic_tol,
        "ratio_bound": report.ratio_bound_holds is True,
    }
    windows = [[n + 1, d] for n, d in enumerate(report.differences)]
    return RunOutcome(
        command="periodic",
        passed=all(checks.values()),
        checks=checks,
        results={"periodic": report.model_dump(mode="json"),
                 "nearby_orbit_distance": distance,
                 "delta_measured": decay.delta_measured},
        series={
            "windows": Series(columns=["window", "difference"], rows=windows),
            "orbit": trajectory_series(orbit, problem.p),
        },
    )


def run_constants(
    d: int,
    p: float,
    delta_d: float,
    C: float,
    rho: float = 0.0,
    h_norm: float = 0.0,
    delta_fraction: float = 0.5,
) -> RunOutcome:
    """Closed-form constants; fails acceptance when the stability block is not admissible."""
    report = evaluate_constants(d, p, delta_d, C, rho=rho, h_norm=h_norm,
                                delta_fraction=delta_fraction)
    checks = {
        "finite": all(math.isfinite(v) for v in (report.N, report.M_bilinear, report.gamma)),
        "stability_admissible": report.stability_violation is None,
    }
    return RunOutcome(command="constants", passed=all(checks.values()), checks=checks,
                      results={"constants": report.model_dump(mode="json")})


def constants_from_config(config: ExperimentConfig) -> RunOutcome:
    """`constants` with every parameter taken from an experiment file."""
    problem = build_problem(config)
    d = config.manifold.d
    sg = config.semigroup
    return run_constants(d, config.solver.p, sg.spectral_constant(d), sg.C,
                         rho=config.solver.rho, h_norm=problem.forcing.h_norm(config.solver.p),
                         delta_fraction=config.experiment.delta_fraction)


RUNNERS = {
    "simulate": run_simulate,
    "verify-semigroup": run_verify_semigroup,
    "stability": run_stability,
    "periodic": run_periodic,
    "constants": constants_from_config,
}
