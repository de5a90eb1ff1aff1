"""
Periodic mild solutions under T-periodic forcing.

The time-T map is iterated window by window; its snapshots form a Cauchy
sequence whose limit, accelerated by geometric extrapolation, starts the
periodic orbit.
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from hypbq.exceptions import PeriodicSolveError
from hypbq.models.experiment import SemigroupConfig, SolverConfig
from hypbq.models.reports import CauchyReport, PeriodicReport
from hypbq.services.constants import evaluate_constants
from hypbq.services.duhamel import Trajectory
from hypbq.services.geometry import State, product_norm
from hypbq.services.picard import DataNorms, MildProblem, picard_solve, smallness_check
from hypbq.utils.logging import get_logger

logger = get_logger(__name__)

MIN_SNAPSHOTS = 3
RATIO_SAFETY = 1.2


def cauchy_diagnostics(snapshots: Sequence[State], p: float) -> Tuple[CauchyReport, State]:
    """
    Pairwise distances, fitted geometric ratio and extrapolated limit of
    x_0, x_1, ... taken at multiples of T.

    The limit is x_N + (x_N - x_{N-1}) r / (1 - r) when 0 < r < 1 and the
    last snapshot otherwise; r >= 1 clears the contracting flag.

    Raises:
        PeriodicSolveError: with fewer than three snapshots
    """
    if len(snapshots) < MIN_SNAPSHOTS:
        raise PeriodicSolveError(
            f"Need at least {MIN_SNAPSHOTS} snapshots, got {len(snapshots)}",
            error_code="TOO_FEW_SNAPSHOTS",
            details={"snapshots": len(snapshots)},
        )
    n = len(snapshots)
    pairwise = [[product_norm(snapshots[i] - snapshots[j], p) for j in range(n)]
                for i in range(n)]
    differences = [pairwise[i][i + 1] for i in range(n - 1)]
    ratios = [b / a for a, b in zip(differences[:-1], differences[1:]) if a > 0]
    report = CauchyReport(pairwise=pairwise, differences=differences, ratios=ratios)
    last = snapshots[-1]

    positive = [(k, d) for k, d in enumerate(differences) if d > 0]
    if len(positive) < 2:
        return report, last
    index = np.array([k for k, _ in positive], dtype=float)
    logs = np.log([d for _, d in positive])
    ratio = math.exp(float(stats.linregress(index, logs).slope))
    report.fitted_ratio = ratio
    report.contracting = ratio < 1.0
    if not report.contracting:
        logger.warning("Snapshots are not contracting", extra={"fitted_ratio": ratio})
        return report, last
    report.extrapolated = True
    limit = last + (last - snapshots[-2]) * (ratio / (1.0 - ratio))
    return report, limit.with_time(last.t)


def periodic_solve(
    problem: MildProblem,
    solver: SolverConfig,
    semigroup: SemigroupConfig,
    period: float,
    periodic_tol: float = 1e-5,
    max_windows: int = 60,
    delta_measured: Optional[float] = None,
) -> Tuple[Trajectory, PeriodicReport]:
    """
    Iterate the time-T map from problem.initial until successive snapshots
    agree to periodic_tol, then re-solve one period from the extrapolated
    limit.

    Raises:
        PeriodicSolveError: if snapshot differences stop decreasing after the
            third window or max_windows is exhausted
    """
    p = problem.p
    grid = problem.grid
    window = solver.model_copy(update={"t_max": period})
    constants = evaluate_constants(grid.d, p, semigroup.spectral_constant(grid.d), semigroup.C)
    report = PeriodicReport(period=period)
    report.smallness = smallness_check(DataNorms.of(problem), semigroup.C,
                                       constants.M_bilinear, constants.N, solver.rho,
                                       periodic=True)

    snapshots: List[State] = [problem.initial.with_time(0.0)]
    state = problem.initial
    for n in range(max_windows):
        t0 = n * period
        traj, iteration = picard_solve(problem.with_initial(state.with_time(t0)),
                                       window, semigroup, t0=t0)
        if not iteration.converged:
            raise PeriodicSolveError(
                f"Window {n} Picard solve did not converge",
                error_code="WINDOW_NOT_CONVERGED",
                details={"window": n, "contraction_ratio": iteration.contraction_ratio},
            )
        state = traj[-1]
        snapshots.append(state)
        d_n = product_norm(snapshots[-1] - snapshots[-2], p)
        report.differences.append(d_n)
        report.windows = n + 1
        logger.info("Periodic window", extra={"window": n, "difference": d_n})
        if len(report.differences) > 1 and report.differences[-2] > 0:
            report.ratios.append(d_n / report.differences[-2])
        if d_n < periodic_tol:
            report.converged = True
            break
        if n >= 3 and d_n >= report.differences[-2]:
            report.strictly_decreasing = False
            raise PeriodicSolveError(
                "Snapshot differences stopped decreasing",
                details={"window": n, "differences": report.differences[-3:]},
            )
    if not report.converged:
        raise PeriodicSolveError(
            f"No periodic convergence within {max_windows} windows",
            error_code="MAX_WINDOWS",
            details={"last_difference": report.differences[-1]},
        )

    limit = snapshots[-1]
    if len(snapshots) >= MIN_SNAPSHOTS:
        report.cauchy, limit = cauchy_diagnostics(snapshots, p)
    orbit, orbit_report = picard_solve(problem.with_initial(limit.with_time(0.0)),
                                       window, semigroup)
    defect = product_norm(orbit[-1] - orbit[0], p)
    scale = orbit.sup_norm(p)
    report.periodicity_defect = defect
    report.relative_defect = defect / scale if scale > 0 else 0.0
    report.orbit_residual = orbit_report.final_residual
    report.strictly_decreasing = all(b < a for a, b in zip(report.differences[1:],
                                                           report.differences[2:]))
    if delta_measured is not None:
        report.ratio_bound = math.exp(-delta_measured * period) * RATIO_SAFETY
        report.ratio_bound_holds = all(r <= report.ratio_bound for r in report.ratios[1:])
    logger.info("Periodic orbit extracted",
                extra={"windows": report.windows, "defect": defect,
                       "relative_defect": report.relative_defect})
    return orbit, report
