"""
Fixed-point construction of the bounded mild solution.

    Phi(v)(t) = e^{-tA} x0 + B(v, v)(t) + T_h(xi)(t) + T(F; f)(t),   v = (u, xi)

iterated from v0 = 0 on a uniform trajectory until successive iterates
agree to picard_tol in the sup-in-time product norm.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from hypbq.exceptions import FieldError, SemigroupError
from hypbq.models.experiment import SemigroupConfig, SolverConfig
from hypbq.models.reports import (
    FittedConstants,
    IterationReport,
    SmallnessCondition,
    SmallnessReport,
)
from hypbq.services.duhamel import (
    Trajectory,
    bilinear_integrand,
    bilinear_trajectory,
    coupling_integrand,
    coupling_trajectory,
    duhamel_integral,
    evaluate_nodes,
    forcing_integrand,
    free_evolution,
)
from hypbq.services.forcing import ForcingSet, random_sources, random_state
from hypbq.services.geometry import ManifoldGrid, State, lp_norm, product_norm
from hypbq.utils.logging import get_logger

logger = get_logger(__name__)

DIVERGENCE_LIMIT = 1e6
GROWTH_PATIENCE = 3
RATIO_SPREAD = 0.1


@dataclass(frozen=True, eq=False)
class MildProblem:
    """Initial state, forcing and exponent of one Boussinesq run."""

    initial: State
    forcing: ForcingSet
    p: float
    _sources: Dict[Tuple[float, ...], List[State]] = field(default_factory=dict, repr=False)

    @property
    def grid(self) -> ManifoldGrid:
        return self.initial.grid

    def with_initial(self, initial: State) -> "MildProblem":
        return MildProblem(initial, self.forcing, self.p)

    def time_nodes(self, solver: SolverConfig, t0: float = 0.0) -> np.ndarray:
        return t0 + np.arange(solver.n_steps + 1) * solver.dt

    def sources(self, time_nodes: np.ndarray) -> List[State]:
        """Forcing integrands [P div F; div f] per node, cached by node set."""
        key = tuple(np.round(time_nodes, 12))
        if key not in self._sources:
            grid = self.grid
            self._sources[key] = [
                forcing_integrand(self.forcing.F(float(t)), self.forcing.f(float(t)))
                if self.forcing.has_source else State.zeros(grid, float(t))
                for t in time_nodes
            ]
        return self._sources[key]


@dataclass(frozen=True)
class DataNorms:
    """||(u0, theta0)||_p, sup_t ||h||_{p/2} and sup_t ||(F, f)||_{p/2}."""

    initial: float
    h: float
    source: float

    @classmethod
    def of(cls, problem: MildProblem) -> "DataNorms":
        return cls(
            initial=product_norm(problem.initial, problem.p),
            h=problem.forcing.h_norm(problem.p),
            source=problem.forcing.source_norm(problem.p),
        )


def phi_map(
    v_traj: Trajectory,
    problem: MildProblem,
    solver: SolverConfig,
    semigroup: SemigroupConfig,
    free: Optional[Trajectory] = None,
) -> Trajectory:
    """One application of Phi on the time nodes of v_traj."""
    time_nodes = v_traj.time_nodes
    sup = v_traj.sup_norm(problem.p)
    if sup > solver.rho:
        logger.warning("Picard input outside the ball",
                       extra={"sup_norm": sup, "rho": solver.rho})
    if free is None:
        free = free_evolution(problem.initial, time_nodes, semigroup)
    sources = problem.sources(time_nodes)
    forcing = problem.forcing

    def integrand(k: int) -> State:
        t = float(time_nodes[k])
        state = v_traj[k]
        g = bilinear_integrand(state.u, state.u, state.theta)
        if forcing.has_buoyancy:
            g = g + coupling_integrand(state.theta, forcing.h(t))
        return (g + sources[k]).with_time(t)

    nodes = evaluate_nodes(integrand, len(v_traj), solver.max_workers)
    integral = duhamel_integral(nodes, v_traj.dt, semigroup, solver.endpoint_rule)
    return Trajectory.from_states(time_nodes, [a + b for a, b in zip(free.states, integral)])


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def _track(
    previous: Trajectory,
    current: Trajectory,
    problem: MildProblem,
    solver: SolverConfig,
    semigroup: SemigroupConfig,
) -> Tuple[float, float]:
    """
    Fitted (M, N) from one Picard step:
    Phi(v) - Phi(w) = B(v - w, v) + B(w, v - w) + T_h(xi - zeta).
    """
    p = problem.p
    delta = current - previous
    d_norm = delta.sup_norm(p)
    rule = solver.endpoint_rule
    b_left = bilinear_trajectory(delta, current, semigroup, rule,
                                 max_workers=solver.max_workers)
    b_right = bilinear_trajectory(previous, delta, semigroup, rule,
                                  max_workers=solver.max_workers)
    m_fit = max(
        _ratio(max(product_norm(s, p) for s in b_left), d_norm * current.sup_norm(p)),
        _ratio(max(product_norm(s, p) for s in b_right), d_norm * previous.sup_norm(p)),
    )
    n_fit = 0.0
    if problem.forcing.has_buoyancy:
        coupled = coupling_trajectory(delta, problem.forcing, semigroup,
                                      max_workers=solver.max_workers)
        theta_norm = max(lp_norm(s.theta, p) for s in delta.states)
        n_fit = _ratio(max(product_norm(s, p) for s in coupled),
                       problem.forcing.h_norm(p) * theta_norm)
    return m_fit, n_fit


def picard_solve(
    problem: MildProblem,
    solver: SolverConfig,
    semigroup: SemigroupConfig,
    initial_guess: Optional[Trajectory] = None,
    t0: float = 0.0,
    track_constants: bool = False,
) -> Tuple[Trajectory, IterationReport]:
    """
    Iterate v_{k+1} = Phi(v_k) from v_0 = 0 (or initial_guess).

    Divergence (non-finite iterates, sup norm beyond DIVERGENCE_LIMIT or
    GROWTH_PATIENCE consecutive growing differences) stops the loop with
    converged = False and contraction_flagged = True instead of raising.
    """
    p = problem.p
    if not p > problem.grid.d:
        raise FieldError(f"Exponent p = {p} must exceed d = {problem.grid.d}",
                         error_code="EXPONENT_NOT_SUPERCRITICAL")
    time_nodes = problem.time_nodes(solver, t0)
    free = free_evolution(problem.initial, time_nodes, semigroup)
    v = initial_guess if initial_guess is not None else Trajectory.zeros(problem.grid, time_nodes)
    previous: Optional[Trajectory] = None
    h_norm = problem.forcing.h_norm(p)
    report = IterationReport(rho=solver.rho, h_norm=h_norm)
    limit = DIVERGENCE_LIMIT * max(solver.rho, 1.0)
    growth = 0
    m_fits: List[float] = []
    n_fits: List[float] = []

    for k in range(1, solver.max_iters + 1):
        try:
            v_next = phi_map(v, problem, solver, semigroup, free)
        except (FieldError, SemigroupError) as exc:
            logger.warning("Picard iterate left the finite range",
                           extra={"iteration": k, "reason": str(exc)})
            report.contraction_flagged = True
            break
        sup = v_next.sup_norm(p)
        diff = (v_next - v).sup_norm(p)
        report.sup_norms.append(sup)
        report.differences.append(diff)
        report.iterations = k
        if len(report.differences) > 1 and report.differences[-2] > 0:
            report.ratios.append(diff / report.differences[-2])
        logger.info("Picard iteration",
                    extra={"iteration": k, "sup_norm": sup, "difference": diff})

        if track_constants and previous is not None and diff > 0:
            m_fit, n_fit = _track(previous, v, problem, solver, semigroup)
            m_fits.append(m_fit)
            n_fits.append(n_fit)

        previous, v = v, v_next
        if diff < solver.picard_tol:
            report.converged = True
            break
        growth = growth + 1 if report.ratios and report.ratios[-1] >= 1.0 else 0
        if not math.isfinite(sup) or sup > limit or growth >= GROWTH_PATIENCE:
            logger.warning("Picard iteration diverging",
                           extra={"iteration": k, "sup_norm": sup})
            report.contraction_flagged = True
            break

    floor = 1e3 * np.finfo(float).eps * max(report.sup_norms or [0.0])
    measured = [r for r, d in zip(report.ratios, report.differences[:-1]) if d > floor]
    if measured:
        report.contraction_ratio = max(measured)
        tail = measured[1:]
        if len(tail) >= 2:
            report.ratio_stable = (max(tail) - min(tail)) <= RATIO_SPREAD * max(tail)
    if report.contraction_ratio is not None and report.contraction_ratio >= 1.0:
        report.contraction_flagged = True
    report.rho_effective = max(report.sup_norms or [0.0])

    if report.converged:
        residual = phi_map(v, problem, solver, semigroup, free) - v
        report.final_residual = residual.sup_norm(p)
    if m_fits:
        report.M_fit = max(m_fits)
        report.N_fit = max(n_fits)
        report.fitted_ratio_bound = 2.0 * report.M_fit * report.rho_effective + report.N_fit * h_norm
    logger.info("Picard finished", extra={"converged": report.converged,
                                          "iterations": report.iterations,
                                          "contraction_ratio": report.contraction_ratio})
    return v, report


def _condition(name: str, lhs: float, rhs: float) -> SmallnessCondition:
    # a degenerate ball (both sides zero) is admissible
    passed = lhs < rhs or (lhs == 0.0 and rhs == 0.0)
    return SmallnessCondition(name=name, lhs=lhs, rhs=rhs, passed=passed, margin=rhs - lhs)


def smallness_check(
    norms: DataNorms,
    C: float,
    M: float,
    N: float,
    rho: float,
    periodic: bool = False,
) -> SmallnessReport:
    """
    Evaluate every smallness hypothesis of the fixed-point argument.

    Example:
        >>> r = smallness_check(DataNorms(0.0, 0.1, 0.0), C=1.0, M=0.5, N=1.0, rho=0.4)
        >>> [c.passed for c in r.conditions[:2]]
        [True, True]
    """
    initial_rhs = rho / (3.0 * C * C) if periodic else rho / (3.0 * C)
    conditions = [
        _condition("contraction", 2.0 * M * rho + N * norms.h, 1.0),
        _condition("ball_radius", rho, 1.0 / (4.0 * M) if M > 0 else math.inf),
        _condition("initial_data", norms.initial, initial_rhs),
        _condition("buoyancy", norms.h, 1.0 / (3.0 * N) if N > 0 else math.inf),
        _condition("forcing", norms.source, rho / (3.0 * M) - rho * rho if M > 0 else math.inf),
    ]
    report = SmallnessReport(conditions=conditions)
    if not report.passed:
        logger.warning("Smallness conditions violated", extra={"failed": report.failed()})
    return report


def mapping_bound(norms: DataNorms, C: float, M: float, N: float, rho: float) -> float:
    """C||x0|| + M(rho^2 + ||(F, f)||) + N rho ||h||."""
    return C * norms.initial + M * (rho * rho + norms.source) + N * rho * norms.h


def fit_discrete_constants(
    problem: MildProblem,
    solver: SolverConfig,
    semigroup: SemigroupConfig,
    n_samples: int,
    seed: int,
    horizon: float = 1.0,
) -> FittedConstants:
    """
    Measured discrete analogues of C, N, M on random smooth data over a
    short horizon.
    """
    grid = problem.grid
    p = problem.p
    rng = np.random.default_rng(seed)
    steps = max(1, int(round(min(horizon, solver.t_max) / solver.dt)))
    time_nodes = np.arange(steps + 1) * solver.dt
    fitted = FittedConstants(n_samples=n_samples)
    h_norm = problem.forcing.h_norm(p)

    def constant(state: State) -> Trajectory:
        return Trajectory.from_states(time_nodes, [state] * time_nodes.size)

    for _ in range(n_samples):
        x = random_state(grid, rng)
        y = random_state(grid, rng)
        x_norm, y_norm = product_norm(x, p), product_norm(y, p)
        if x_norm > 0:
            fitted.C_fit = max(fitted.C_fit,
                               free_evolution(x, time_nodes, semigroup).sup_norm(p) / x_norm)
        b = bilinear_trajectory(constant(x), constant(y), semigroup, solver.endpoint_rule,
                                max_workers=solver.max_workers)
        fitted.M_fit = max(fitted.M_fit,
                           _ratio(max(product_norm(s, p) for s in b), x_norm * y_norm))
        if problem.forcing.has_buoyancy:
            coupled = coupling_trajectory(constant(x), problem.forcing, semigroup,
                                          max_workers=solver.max_workers)
            fitted.N_fit = max(fitted.N_fit, _ratio(
                max(product_norm(s, p) for s in coupled), h_norm * lp_norm(x.theta, p)))
        F, f = random_sources(grid, rng)
        g = forcing_integrand(F, f)
        forced = duhamel_integral([g.with_time(float(t)) for t in time_nodes], solver.dt,
                                  semigroup, solver.endpoint_rule)
        fitted.M_forcing_fit = max(fitted.M_forcing_fit, _ratio(
            max(product_norm(s, p) for s in forced),
            max(lp_norm(F, p / 2.0), lp_norm(f, p / 2.0))))
    logger.info("Fitted discrete constants", extra=fitted.model_dump())
    return fitted
