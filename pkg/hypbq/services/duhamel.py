"""
Duhamel integrals of the Boussinesq mild formulation.

    B(v, w)(t)   = -int_0^t e^{-(t-s)A} [P div(u (x) v); div(u xi)] ds
    T_h(eta)(t)  =  int_0^t e^{-(t-s)A} [P(eta h); 0] ds
    T(F; f)(t)   =  int_0^t e^{-(t-s)A} [P div F; div f] ds

All three are evaluated on a uniform trajectory by one recursive product
rule: the running integral over [0, t_{n-1}] is propagated by e^{-dt A}
and the new subinterval is integrated exactly against the discrete
semigroup (default), by the trapezoid rule, or by a graded four-point rule
clustered at the current time.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from hypbq.exceptions import DuhamelError
from hypbq.models.experiment import SemigroupConfig
from hypbq.models.reports import LinearBoundCheck
from hypbq.services.forcing import ForcingSet
from hypbq.services.geometry import (
    ManifoldGrid,
    ScalarField,
    State,
    TensorField,
    VectorField,
    div_tensor,
    div_vector,
    outer_product,
    product_norm,
    scale_vector,
)
from hypbq.services.projection import leray_project
from hypbq.services.semigroup import generator_solve, matrix_semigroup_apply, substeps
from hypbq.utils.logging import get_logger

logger = get_logger(__name__)

# nodes sigma/dt of the graded rule on the last subinterval, exact for cubics
_GRADED_NODES = np.array([0.0, 1.0 / 9.0, 4.0 / 9.0, 1.0])
_GRADED_WEIGHTS = np.linalg.solve(
    np.vander(_GRADED_NODES, increasing=True).T,
    1.0 / np.arange(1, _GRADED_NODES.size + 1),
)

ENDPOINT_RULES = ("exponential", "graded", "trapezoid")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States on uniformly spaced time nodes, all on one grid."""

    grid: ManifoldGrid
    time_nodes: np.ndarray
    states: Tuple[State, ...]

    def __post_init__(self) -> None:
        nodes = np.asarray(self.time_nodes, dtype=float)
        states = tuple(self.states)
        if nodes.ndim != 1 or nodes.size == 0 or nodes.size != len(states):
            raise DuhamelError(
                "Trajectory needs one state per time node",
                error_code="TRAJECTORY_SHAPE",
                details={"nodes": int(nodes.size), "states": len(states)},
            )
        if nodes.size > 1:
            steps = np.diff(nodes)
            if not (np.all(steps > 0) and np.allclose(steps, steps[0], rtol=1e-9, atol=0.0)):
                raise DuhamelError("Trajectory time nodes must be uniformly increasing",
                                   error_code="TRAJECTORY_SPACING")
        for state in states:
            if state.grid is not self.grid:
                raise DuhamelError("Trajectory states live on different grids",
                                   error_code="TRAJECTORY_GRID")
        object.__setattr__(self, "time_nodes", nodes)
        object.__setattr__(self, "states", states)

    @classmethod
    def from_states(cls, time_nodes: np.ndarray, states: Sequence[State]) -> "Trajectory":
        stamped = tuple(s.with_time(float(t)) for t, s in zip(time_nodes, states))
        return cls(states[0].grid, np.asarray(time_nodes, dtype=float), stamped)

    @classmethod
    def zeros(cls, grid: ManifoldGrid, time_nodes: np.ndarray) -> "Trajectory":
        return cls(grid, time_nodes, tuple(State.zeros(grid, float(t)) for t in time_nodes))

    @property
    def dt(self) -> float:
        return float(self.time_nodes[1] - self.time_nodes[0]) if len(self) > 1 else 0.0

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, index: int) -> State:
        return self.states[index]

    def _check_compatible(self, other: "Trajectory") -> None:
        if other.grid is not self.grid or not np.array_equal(other.time_nodes, self.time_nodes):
            raise DuhamelError("Trajectories have different grids or time nodes",
                               error_code="TRAJECTORY_MISMATCH")

    def __add__(self, other: "Trajectory") -> "Trajectory":
        self._check_compatible(other)
        return Trajectory(self.grid, self.time_nodes,
                          tuple(a + b for a, b in zip(self.states, other.states)))

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        self._check_compatible(other)
        return Trajectory(self.grid, self.time_nodes,
                          tuple(a - b for a, b in zip(self.states, other.states)))

    def __mul__(self, scalar: float) -> "Trajectory":
        return Trajectory(self.grid, self.time_nodes, tuple(s * scalar for s in self.states))

    __rmul__ = __mul__

    def norms(self, p: float) -> np.ndarray:
        return np.array([product_norm(s, p) for s in self.states])

    def sup_norm(self, p: float) -> float:
        return float(np.max(self.norms(p)))


# ---------------------------------------------------------------------------
# Integrands
# ---------------------------------------------------------------------------


def _is_zero(state: State) -> bool:
    return not (np.any(state.u.components) or np.any(state.theta.values))


def bilinear_integrand(u: VectorField, v: VectorField, xi: ScalarField) -> State:
    """-[P div(u (x) v); div(u xi)]."""
    grid = u.grid
    if not np.any(u.components):
        return State.zeros(grid)
    velocity = leray_project(div_tensor(outer_product(u, v)))
    heat = div_vector(scale_vector(u, xi))
    return State(-velocity, -heat)


def coupling_integrand(eta: ScalarField, h: VectorField) -> State:
    """[P(eta h); 0]."""
    return State(leray_project(scale_vector(h, eta)), ScalarField.zeros(eta.grid))


def forcing_integrand(F: TensorField, f: VectorField) -> State:
    """[P div F; div f]."""
    return State(leray_project(div_tensor(F)), div_vector(f))


def evaluate_nodes(fn: Callable[[int], State], n_nodes: int, max_workers: int = 1) -> List[State]:
    """Evaluate fn at every node index, in threads when max_workers > 1."""
    if max_workers <= 1 or n_nodes < 2:
        return [fn(k) for k in range(n_nodes)]
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(fn, range(n_nodes)))


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def _last_interval(g_prev: State, g_now: State, propagated_prev: State, h: float,
                   cfg: SemigroupConfig) -> State:
    """Graded rule for int_0^h e^{-sigma A} g(t_n - sigma) d sigma, g linear in sigma."""
    w = _GRADED_WEIGHTS
    total = g_now * (w[0] * h) + propagated_prev * (w[3] * h)
    for node, weight in zip(_GRADED_NODES[1:3], w[1:3]):
        sample = g_now * (1.0 - node) + g_prev * node
        if not _is_zero(sample):
            total = total + matrix_semigroup_apply(sample, node * h, cfg) * (weight * h)
    return total


def _propagate_state(state: State, h: float, cfg: SemigroupConfig) -> State:
    return matrix_semigroup_apply(state, h, cfg) if not _is_zero(state) else state


def _exponential_step(g_prev: State, g_now: State, propagated_prev: State,
                      propagated_now: State, h: float) -> State:
    """
    int_0^h e^{-sigma A} g(t_n - sigma) d sigma for g linear in sigma, exact
    for the discrete propagator E = e^{-hA}:
    A^{-1} (g_n - E g_{n-1} + A^{-1} (I - E)(g_{n-1} - g_n) / h).
    """
    slope = (g_prev - g_now) - (propagated_prev - propagated_now)
    return generator_solve(g_now - propagated_prev + generator_solve(slope) * (1.0 / h))


def duhamel_integral(
    integrands: Sequence[State],
    dt: float,
    cfg: SemigroupConfig,
    endpoint_rule: str = "exponential",
    refinement: int = 1,
) -> List[State]:
    """
    I_n = int_{t_0}^{t_n} e^{-(t_n - s)A} g(s) ds at every node.

    Every rule carries the history as I_n = e^{-dt A} I_{n-1} + (step integral).
    "exponential" integrates each step exactly against the discrete semigroup
    with g linear in between, so stiff modes settle at A^{-1} g. "trapezoid"
    uses dt/2 (e^{-dt A} g_{n-1} + g_n) for the step; "graded" keeps the
    trapezoid history and re-integrates the last subinterval on four nodes.
    refinement > 1 splits each step and interpolates g linearly in between.
    """
    if endpoint_rule not in ENDPOINT_RULES:
        raise DuhamelError(f"Unknown endpoint rule {endpoint_rule!r}",
                           error_code="ENDPOINT_RULE", details={"rule": endpoint_rule})
    if refinement < 1:
        raise DuhamelError("Refinement must be a positive integer",
                           details={"refinement": refinement})
    if not integrands:
        return []
    grid = integrands[0].grid
    t0 = integrands[0].t
    h = dt / refinement

    fine: List[State] = [integrands[0]]
    for g_prev, g_next in zip(integrands[:-1], integrands[1:]):
        for i in range(1, refinement + 1):
            frac = i / refinement
            fine.append(g_prev * (1.0 - frac) + g_next * frac)

    running = State.zeros(grid, t0)
    out = [running]
    propagated_prev = _propagate_state(fine[0], h, cfg)
    for n in range(1, len(fine)):
        g_prev, g_now = fine[n - 1], fine[n]
        carried = _propagate_state(running, h, cfg)
        if endpoint_rule == "exponential":
            propagated_now = _propagate_state(g_now, h, cfg)
            running = carried + _exponential_step(g_prev, g_now, propagated_prev,
                                                  propagated_now, h)
        else:
            propagated_now = None
            running = carried + (propagated_prev + g_now) * (0.5 * h)
        if n % refinement == 0:
            if endpoint_rule == "graded":
                value = carried + _last_interval(g_prev, g_now, propagated_prev, h, cfg)
            else:
                value = running
            out.append(value.with_time(t0 + (n // refinement) * dt))
        propagated_prev = (propagated_now if propagated_now is not None
                           else _propagate_state(g_now, h, cfg))
    return out

# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


def _check_index(traj: Trajectory, t_index: int) -> None:
    if not 0 <= t_index < len(traj):
        raise DuhamelError(f"Time index {t_index} outside trajectory of {len(traj)} nodes",
                           error_code="TIME_INDEX", details={"t_index": t_index})


def bilinear_trajectory(v_traj: Trajectory, w_traj: Trajectory, cfg: SemigroupConfig,
                        endpoint_rule: str = "exponential", refinement: int = 1,
                        max_workers: int = 1) -> List[State]:
    """B(v, w) at every node; u comes from v, (v, xi) from w."""
    v_traj._check_compatible(w_traj)

    def integrand(k: int) -> State:
        return bilinear_integrand(v_traj[k].u, w_traj[k].u, w_traj[k].theta).with_time(
            float(v_traj.time_nodes[k]))

    nodes = evaluate_nodes(integrand, len(v_traj), max_workers)
    return duhamel_integral(nodes, v_traj.dt, cfg, endpoint_rule, refinement)


def op_B(v_traj: Trajectory, w_traj: Trajectory, t_index: int, cfg: SemigroupConfig,
         endpoint_rule: str = "exponential", refinement: int = 1) -> State:
    """Bilinear Duhamel term at one node."""
    _check_index(v_traj, t_index)
    head_v = Trajectory(v_traj.grid, v_traj.time_nodes[:t_index + 1], v_traj.states[:t_index + 1])
    head_w = Trajectory(w_traj.grid, w_traj.time_nodes[:t_index + 1], w_traj.states[:t_index + 1])
    return bilinear_trajectory(head_v, head_w, cfg, endpoint_rule, refinement)[-1]


def coupling_trajectory(eta_traj: Trajectory, forcing: ForcingSet, cfg: SemigroupConfig,
                        endpoint_rule: str = "trapezoid", max_workers: int = 1) -> List[State]:
    """T_h(eta) at every node, eta being the theta-component of eta_traj."""
    grid = eta_traj.grid

    def integrand(k: int) -> State:
        t = float(eta_traj.time_nodes[k])
        if not forcing.has_buoyancy:
            return State.zeros(grid, t)
        return coupling_integrand(eta_traj[k].theta, forcing.h(t)).with_time(t)

    nodes = evaluate_nodes(integrand, len(eta_traj), max_workers)
    return duhamel_integral(nodes, eta_traj.dt, cfg, endpoint_rule)


def op_Th(eta_traj: Trajectory, forcing: ForcingSet, t_index: int,
          cfg: SemigroupConfig) -> State:
    """Coupling Duhamel term at one node; the theta-component is exactly zero."""
    _check_index(eta_traj, t_index)
    head = Trajectory(eta_traj.grid, eta_traj.time_nodes[:t_index + 1],
                      eta_traj.states[:t_index + 1])
    return coupling_trajectory(head, forcing, cfg)[-1]


def forcing_trajectory(forcing: ForcingSet, time_nodes: np.ndarray, cfg: SemigroupConfig,
                       endpoint_rule: str = "exponential", max_workers: int = 1) -> List[State]:
    """T(F; f) at every node."""
    grid = forcing.grid
    time_nodes = np.asarray(time_nodes, dtype=float)
    dt = float(time_nodes[1] - time_nodes[0]) if time_nodes.size > 1 else 0.0

    def integrand(k: int) -> State:
        t = float(time_nodes[k])
        if not forcing.has_source:
            return State.zeros(grid, t)
        return forcing_integrand(forcing.F(t), forcing.f(t)).with_time(t)

    nodes = evaluate_nodes(integrand, time_nodes.size, max_workers)
    return duhamel_integral(nodes, dt, cfg, endpoint_rule)


def op_T_forcing(forcing: ForcingSet, time_nodes: np.ndarray, t_index: int,
                 cfg: SemigroupConfig) -> State:
    """Forcing Duhamel term at one node."""
    time_nodes = np.asarray(time_nodes, dtype=float)
    if not 0 <= t_index < time_nodes.size:
        raise DuhamelError(f"Time index {t_index} outside {time_nodes.size} nodes",
                           error_code="TIME_INDEX", details={"t_index": t_index})
    return forcing_trajectory(forcing, time_nodes[:t_index + 1], cfg)[-1]


def free_evolution(initial: State, time_nodes: np.ndarray, cfg: SemigroupConfig) -> Trajectory:
    """e^{-(t - t_0)A} x0 on the time nodes, stepped node to node."""
    time_nodes = np.asarray(time_nodes, dtype=float)
    states = [initial.with_time(float(time_nodes[0]))]
    for k in range(1, time_nodes.size):
        step = float(time_nodes[k] - time_nodes[k - 1])
        states.append(matrix_semigroup_apply(states[-1], step, cfg))
    return Trajectory.from_states(time_nodes, states)


def linear_mild_solution(
    initial: State,
    eta_traj: Optional[Trajectory],
    forcing: ForcingSet,
    time_nodes: np.ndarray,
    cfg: SemigroupConfig,
    p: float,
    constants: Tuple[float, float, float],
    endpoint_rule: str = "exponential",
) -> Tuple[Trajectory, LinearBoundCheck]:
    """
    x(t) = e^{-tA} x0 + T_h(eta)(t) + T(F; f)(t) and its a priori bound check.

    Args:
        initial: (u0, theta0)
        eta_traj: coupling input, read from its theta-component (None for eta = 0)
        forcing: h, F, f
        time_nodes: uniform nodes starting at the initial time
        cfg: semigroup settings
        p: Lebesgue exponent of the product norm
        constants: (C, N, M) used in C||x0|| + N||h|| ||(0, eta)|| + M||(F, f)||
    """
    free = free_evolution(initial, time_nodes, cfg)
    forced = forcing_trajectory(forcing, time_nodes, cfg, endpoint_rule)
    states = [a + b for a, b in zip(free.states, forced)]
    eta_norm = 0.0
    if eta_traj is not None:
        if not np.array_equal(eta_traj.time_nodes, free.time_nodes):
            raise DuhamelError("Coupling input uses different time nodes",
                               error_code="TRAJECTORY_MISMATCH")
        coupled = coupling_trajectory(eta_traj, forcing, cfg)
        states = [a + b for a, b in zip(states, coupled)]
        eta_norm = max(product_norm(State(VectorField.zeros(s.grid), s.theta), p)
                       for s in eta_traj.states)
    solution = Trajectory.from_states(free.time_nodes, states)

    C, N, M = constants
    measured = solution.sup_norm(p)
    bound = (C * product_norm(initial, p) + N * forcing.h_norm(p) * eta_norm
             + M * forcing.source_norm(p))
    check = LinearBoundCheck(measured=measured, bound=bound, holds=measured <= bound,
                             C=C, N=N, M=M)
    logger.info("Linear mild solution", extra={"measured": measured, "bound": bound})
    return solution, check


def _direct_factor(grid: ManifoldGrid, h: float, theta: float):  # type: ignore[no-untyped-def]
    key = ("direct", h, theta)
    cached = grid.cache.get(key)
    if cached is None:
        vector = sp.csr_matrix(grid.bochner_matrix - (grid.d - 1) * sp.identity(
            grid.bochner_matrix.shape[0]))
        blocks = []
        for generator in (vector, grid.laplacian_matrix):
            eye = sp.identity(generator.shape[0], format="csc")
            blocks.append((splu(sp.csc_matrix(eye - theta * h * generator)),
                           sp.csr_matrix(eye + (1.0 - theta) * h * generator)))
        cached = tuple(blocks)
        grid.cache[key] = cached
    return cached


def direct_linear_solve(
    initial: State,
    eta_traj: Optional[Trajectory],
    forcing: ForcingSet,
    time_nodes: np.ndarray,
    cfg: SemigroupConfig,
) -> Trajectory:
    """
    Theta-scheme solve of the differential form
    u_t = L u + P(eta h) + P div F,  theta_t = Delta_g theta + div f,
    with the source interpolated linearly between nodes.
    """
    grid = initial.grid
    time_nodes = np.asarray(time_nodes, dtype=float)

    def source(k: int) -> State:
        t = float(time_nodes[k])
        g = State.zeros(grid, t)
        if forcing.has_source:
            g = g + forcing_integrand(forcing.F(t), forcing.f(t))
        if eta_traj is not None and forcing.has_buoyancy:
            g = g + coupling_integrand(eta_traj[k].theta, forcing.h(t))
        return g

    theta = cfg.theta_scheme
    x = initial
    states = [initial]
    g_node = source(0)
    for k in range(1, time_nodes.size):
        dt = float(time_nodes[k] - time_nodes[k - 1])
        m = substeps(dt, cfg)
        h = dt / m
        (lu_u, ex_u), (lu_t, ex_t) = _direct_factor(grid, h, theta)
        g_next = source(k)
        u = x.u.components.ravel()
        th = x.theta.values.ravel()
        for i in range(m):
            a = g_node * (1.0 - i / m) + g_next * (i / m)
            b = g_node * (1.0 - (i + 1) / m) + g_next * ((i + 1) / m)
            gu = (1.0 - theta) * a.u.components.ravel() + theta * b.u.components.ravel()
            gt = (1.0 - theta) * a.theta.values.ravel() + theta * b.theta.values.ravel()
            u = lu_u.solve(ex_u @ u + h * gu)
            th = lu_t.solve(ex_t @ th + h * gt)
        x = State(VectorField(grid, u.reshape(x.u.components.shape)),
                  ScalarField(grid, th.reshape(grid.shape)), float(time_nodes[k]))
        states.append(x)
        g_node = g_next
    return Trajectory.from_states(time_nodes, states)
