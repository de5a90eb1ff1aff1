"""
Exponential stability: the explicit decay-rate bound, the cone inequality as
a discrete Volterra system, and perturbation-decay experiments.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import special, stats

from hypbq.config import settings
from hypbq.exceptions import ConvergenceError, StabilityError
from hypbq.models.experiment import SemigroupConfig, SolverConfig
from hypbq.models.reports import DecayReport
from hypbq.services.constants import cone_norm_bound, evaluate_constants, gamma_fn
from hypbq.services.duhamel import Trajectory
from hypbq.services.geometry import State
from hypbq.services.picard import DataNorms, MildProblem, picard_solve, smallness_check
from hypbq.utils.logging import get_logger

logger = get_logger(__name__)

MIN_FIT_POINTS = 3
R_SQUARED_MIN = 0.98


def delta_bound(
    gamma: float,
    rho: float,
    C_tilde: float,
    theta: float,
    theta_tilde: float,
    h_norm: float,
) -> float:
    """
    Supremum of admissible decay rates

        min{gamma/2,
            gamma - (4 rho Ct gamma Gamma(1-tt) / (gamma - 8 rho Ct))^{1-tt},
            gamma - (gamma Ct |h| Gamma(1-th) / (gamma - 2 Ct |h|))^{1-th}}

    Raises:
        StabilityError: if a denominator or the bound itself is not positive
    """
    bilinear_den = gamma - 8.0 * rho * C_tilde
    coupling_den = gamma - 2.0 * C_tilde * h_norm
    if not (bilinear_den > 0 and coupling_den > 0):
        raise StabilityError(
            "Smallness violated: decay-bound denominators must be positive",
            error_code="SMALLNESS_VIOLATED",
            details={"bilinear_den": bilinear_den, "coupling_den": coupling_den},
        )
    bilinear = (4.0 * rho * C_tilde * gamma * gamma_fn(1.0 - theta_tilde)
                / bilinear_den) ** (1.0 - theta_tilde)
    coupling = (gamma * C_tilde * h_norm * gamma_fn(1.0 - theta)
                / coupling_den) ** (1.0 - theta)
    bound = min(0.5 * gamma, gamma - bilinear, gamma - coupling)
    if not bound > 0:
        raise StabilityError(
            f"No admissible decay rate (bound {bound:.6g})",
            error_code="DELTA_NONPOSITIVE",
            details={"bound": bound},
        )
    return bound


def cone_operator_norm(
    kind: str,
    gamma: float,
    delta: float,
    rho: float,
    C_tilde: float,
    h_norm: float,
    exps: Tuple[float, float],
) -> float:
    """
    Closed-form norm bound of the cone operators A (rate gamma, tail 1/gamma)
    and D (rate gamma - delta, tail 2/gamma).

    For D the bound is also checked to be at most 1 whenever delta is
    admissible.
    """
    theta, theta_tilde = exps
    if kind == "A":
        return cone_norm_bound(gamma, rho, C_tilde, h_norm, theta, theta_tilde, 1.0 / gamma)
    if kind != "D":
        raise StabilityError(f"Unknown cone operator {kind!r}", error_code="CONE_KIND")
    value = cone_norm_bound(gamma - delta, rho, C_tilde, h_norm, theta, theta_tilde,
                            2.0 / gamma)
    try:
        admissible = delta < delta_bound(gamma, rho, C_tilde, theta, theta_tilde, h_norm)
    except StabilityError:
        admissible = False
    if admissible and value > 1.0:
        raise StabilityError(
            f"||D|| = {value:.6g} exceeds 1 for an admissible delta",
            error_code="CONE_NORM_EXCEEDS_ONE",
            details={"norm_D": value, "delta": delta},
        )
    return value


# ---------------------------------------------------------------------------
# Volterra cone system
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelTerm:
    """coefficient * (1 + sigma^{-exponent}) e^{-rate sigma}, or the pure exponential when exponent is None."""

    coefficient: float
    rate: float
    exponent: Optional[float] = None

    def __post_init__(self) -> None:
        if self.coefficient < 0 or self.rate < 0:
            raise StabilityError("Kernel coefficients and rates must be nonnegative",
                                 error_code="KERNEL_INVALID")
        if self.exponent is not None and not 0.0 < self.exponent < 1.0:
            raise StabilityError(f"Kernel exponent must lie in (0, 1), got {self.exponent}",
                                 error_code="KERNEL_INVALID")


def _moment(s: float, rate: float, x: float) -> float:
    # int_0^x sigma^{s-1} e^{-rate sigma} d sigma
    if x <= 0:
        return 0.0
    if rate == 0:
        return x ** s / s
    return rate ** (-s) * special.gamma(s) * special.gammainc(s, rate * x)


def _interval_moments(terms: Sequence[KernelTerm], a: float, b: float) -> Tuple[float, float]:
    m0 = m1 = 0.0
    for term in terms:
        powers = [1.0] if term.exponent is None else [1.0, 1.0 - term.exponent]
        for s in powers:
            m0 += term.coefficient * (_moment(s, term.rate, b) - _moment(s, term.rate, a))
            m1 += term.coefficient * (_moment(s + 1.0, term.rate, b)
                                      - _moment(s + 1.0, term.rate, a))
    return m0, m1


def volterra_matrix(terms: Sequence[KernelTerm], n_nodes: int, dt: float) -> np.ndarray:
    """
    Product-trapezoid matrix of (A psi)(t_i) = int_0^{t_i} k(t_i - s) psi(s) ds
    with psi piecewise linear and exact kernel moments on each interval.
    """
    right = np.zeros(n_nodes)
    left = np.zeros(n_nodes)
    for m in range(n_nodes - 1):
        a = m * dt
        m0, m1 = _interval_moments(terms, a, a + dt)
        right[m] = ((a + dt) * m0 - m1) / dt   # weight of psi(t_i - m dt)
        left[m] = (m1 - a * m0) / dt           # weight of psi(t_i - (m + 1) dt)
    W = np.zeros((n_nodes, n_nodes))
    for i in range(1, n_nodes):
        j = np.arange(1, i + 1)
        W[i, j] += right[i - j]
        j = np.arange(0, i)
        W[i, j] += left[i - j - 1]
    return W


def volterra_solve(terms: Sequence[KernelTerm], z: np.ndarray, dt: float) -> np.ndarray:
    """
    Solve psi = A psi + z by forward substitution.

    Raises:
        StabilityError: if the max row sum of the quadrature matrix is >= 1
    """
    z = np.asarray(z, dtype=float)
    W = volterra_matrix(terms, z.size, dt)
    row_sum = float(np.max(np.sum(np.abs(W), axis=1))) if z.size else 0.0
    if row_sum >= 1.0:
        raise StabilityError(
            f"Volterra operator is not a contraction (row sum {row_sum:.6g})",
            error_code="VOLTERRA_NOT_CONTRACTIVE",
            details={"row_sum": row_sum},
        )
    psi = np.zeros_like(z)
    for i in range(z.size):
        psi[i] = (z[i] + W[i, :i] @ psi[:i]) / (1.0 - W[i, i])
    return psi


def cone_kernel(gamma: float, rho: float, C_tilde: float, h_norm: float,
                exps: Tuple[float, float]) -> Tuple[KernelTerm, ...]:
    """Kernel of the cone operator A with the integrable singular form."""
    theta, theta_tilde = exps
    return (
        KernelTerm(2.0 * rho * C_tilde, gamma, theta_tilde),
        KernelTerm(C_tilde * h_norm, gamma, theta),
    )


# ---------------------------------------------------------------------------
# Perturbation experiments
# ---------------------------------------------------------------------------


def fit_decay(times: np.ndarray, phi: np.ndarray, window_start: float) -> DecayReport:
    """Least-squares fit of log phi on the window t >= window_start where phi > 100 eps."""
    times = np.asarray(times, dtype=float)
    phi = np.asarray(phi, dtype=float)
    report = DecayReport(times=times.tolist(), phi=phi.tolist())
    if not np.any(phi > 0):
        logger.info("Zero perturbation, decay fit skipped")
        return report
    mask = (times >= window_start) & (phi > 100.0 * np.finfo(float).eps)
    if np.count_nonzero(mask) < MIN_FIT_POINTS:
        report.passed = False
        report.envelope_holds = False
        logger.warning("Too few points above round-off for a decay fit",
                       extra={"points": int(np.count_nonzero(mask))})
        return report
    fit = stats.linregress(times[mask], np.log(phi[mask]))
    delta = -float(fit.slope)
    prefactor = math.exp(float(fit.intercept))
    c_fit = max(prefactor, float(np.max(phi * np.exp(delta * times))))
    envelope = phi <= c_fit * np.exp(-delta * times) * (1.0 + 1e-12)
    window = phi[mask]
    report.delta_measured = delta
    report.prefactor = prefactor
    report.C_fit = c_fit
    report.r_squared = float(fit.rvalue) ** 2
    report.fit_window = [float(times[mask][0]), float(times[mask][-1])]
    report.envelope_holds = bool(np.all(envelope))
    report.monotone_after_transient = bool(np.all(np.diff(window) <= 1e-12 * window[:-1]))
    report.passed = (delta > 0 and report.r_squared >= R_SQUARED_MIN
                     and report.envelope_holds and math.isfinite(c_fit))
    return report


def converged_solve(problem: MildProblem, solver: SolverConfig, semigroup: SemigroupConfig,
                    name: str = "base") -> Trajectory:
    """
    Picard solution that must converge.

    Raises:
        ConvergenceError: if the iteration does not converge
    """
    traj, report = picard_solve(problem, solver, semigroup)
    if not report.converged:
        raise ConvergenceError(
            f"{name} Picard solve did not converge",
            details={"iterations": report.iterations,
                     "contraction_ratio": report.contraction_ratio},
        )
    return traj


def perturbation_experiment(
    problem: MildProblem,
    perturbation: State,
    solver: SolverConfig,
    semigroup: SemigroupConfig,
    fit_window_start: float = 1.0,
    delta_fraction: float = 0.5,
    base: Optional[Trajectory] = None,
) -> DecayReport:
    """
    Solve from x0 and x0 + perturbation, record phi(t) = ||x(t) - x~(t)||
    and compare the fitted decay rate with the closed-form bound.

    A precomputed base solution from x0 skips the first solve; its time nodes
    must be those of the solver settings.

    Raises:
        ConvergenceError: if either Picard solve does not converge
        StabilityError: if the base solution has other time nodes
    """
    grid = problem.grid
    p = problem.p
    delta_d = semigroup.spectral_constant(grid.d)
    perturbed = problem.with_initial(problem.initial + perturbation)

    constants = evaluate_constants(grid.d, p, delta_d, semigroup.C)
    for candidate in (problem, perturbed):
        smallness = smallness_check(DataNorms.of(candidate), semigroup.C,
                                    constants.M_bilinear, constants.N, solver.rho)
        if not smallness.passed:
            logger.warning("Stability run outside the proven regime",
                           extra={"failed": smallness.failed()})

    if base is None:
        with ThreadPoolExecutor(max_workers=min(2, settings.max_workers)) as executor:
            base_future = executor.submit(converged_solve, problem, solver, semigroup)
            other_future = executor.submit(converged_solve, perturbed, solver, semigroup,
                                           "perturbed")
            base, other = base_future.result(), other_future.result()
    else:
        if not np.array_equal(base.time_nodes, problem.time_nodes(solver)):
            raise StabilityError("Base solution uses different time nodes",
                                 error_code="TRAJECTORY_MISMATCH")
        other = converged_solve(perturbed, solver, semigroup, "perturbed")

    phi = (base - other).norms(p)
    decay = fit_decay(base.time_nodes, phi, fit_window_start)

    theory = evaluate_constants(grid.d, p, delta_d, semigroup.C, rho=solver.rho,
                                h_norm=problem.forcing.h_norm(p),
                                delta_fraction=delta_fraction)
    decay.gamma = theory.gamma
    decay.delta_bound = theory.delta_bound
    decay.C_delta_with_C = theory.C_delta_with_C
    decay.C_delta_with_M = theory.C_delta_with_M
    decay.norm_A = theory.norm_A
    decay.norm_D = theory.norm_D
    decay.theory_violation = theory.stability_violation
    logger.info("Perturbation experiment",
                extra={"delta_measured": decay.delta_measured,
                       "r_squared": decay.r_squared, "delta_bound": decay.delta_bound})
    return decay
