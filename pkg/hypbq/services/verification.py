"""
Numerical checks of the discrete operators and the heat semigroup estimates.

Each check returns an EstimateReport; run_semigroup_suite collects them for
the verify-semigroup command.
"""

import math
from typing import Callable, List, Optional

import numpy as np
from scipy import stats

from hypbq.models.experiment import ExperimentConfig, SemigroupConfig
from hypbq.models.reports import EstimateReport
from hypbq.services.forcing import random_sources, random_state
from hypbq.services.geometry import (
    ManifoldGrid,
    ScalarField,
    TensorField,
    VectorField,
    bochner_laplacian,
    build_grid,
    div_tensor,
    div_vector,
    grad_scalar,
    inner,
    laplace_beltrami,
    lp_norm,
    rot_adjoint,
    sample_scalar,
    sample_vector,
)
from hypbq.services.projection import leray_project
from hypbq.services.semigroup import (
    dispersive_bound,
    heat_kernel_mass,
    scalar_semigroup_kernel_apply,
    semigroup_cn_apply,
    smoothing_bound,
)
from hypbq.utils.logging import get_logger

logger = get_logger(__name__)

# Stated constants of the estimate checks: measured ratio <= constant * bound
DISPERSIVE_CONSTANT = 1.0
SMOOTHING_CONSTANT = 10.0
PROJECTOR_CONSTANT = 4.0

# small-t and large-t regimes of the dispersive and smoothing sweeps
SMALL_T_MAX = 0.2


def _report(name: str, value: float, threshold: Optional[float], passed: bool,
            **details: float) -> EstimateReport:
    report = EstimateReport(name=name, passed=bool(passed), value=float(value),
                            threshold=threshold, details={k: float(v) for k, v in details.items()})
    logger.info("Verification check", extra={"check": name, "value": report.value,
                                             "passed": report.passed})
    return report


def _relative_l2(a: ScalarField, b: ScalarField) -> float:
    return lp_norm(a - b, 2.0) / max(lp_norm(b, 2.0), 1e-300)


def _bump(center: float, width: float) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    return lambda tau, phi: np.exp(-((tau - center) / width) ** 2)


def _compact_bump(grid: ManifoldGrid, rng: np.random.Generator, angular: bool) -> ScalarField:
    # smooth, vanishing well before tau_max
    center = rng.uniform(0.2, 0.4) * grid.tau_max
    width = rng.uniform(0.05, 0.12) * grid.tau_max
    mode = int(rng.integers(0, 3)) if angular and grid.d == 2 else 0
    return sample_scalar(grid, lambda tau, phi: np.exp(-((tau - center) / width) ** 2)
                         * np.cos(mode * phi))


# ---------------------------------------------------------------------------
# Geometry identities
# ---------------------------------------------------------------------------


def check_divergence_theorem(grid: ManifoldGrid, rng: np.random.Generator) -> EstimateReport:
    """Sum of w div v vanishes for fields with zero normal flux at tau_max."""
    comps = rng.normal(size=(grid.n_frame,) + grid.shape)
    comps[0, -1] = 0.0
    v = VectorField(grid, comps)
    total = float(np.sum(grid.weights * div_vector(v).values))
    scale = float(np.sum(grid.weights * np.abs(div_vector(v).values)))
    value = abs(total) / max(scale, 1e-300)
    return _report("divergence_theorem", value, 1e-10, value <= 1e-10)


def check_eigenfunction_order(d: int, tau_max: float, n_omega: int,
                              volumes: str = "midpoint") -> EstimateReport:
    """Delta_g cosh = d cosh, observed order over two refinements."""
    errors = []
    for n_tau in (32, 64, 128):
        grid = build_grid(d, tau_max, n_tau, n_omega, volumes)
        f = sample_scalar(grid, lambda tau, phi: np.cosh(tau))
        lap = laplace_beltrami(f).values[:-1]
        exact = d * f.values[:-1]
        errors.append(float(np.max(np.abs(lap - exact)) / np.max(np.abs(exact))))
    orders = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
    value = min(orders)
    return _report("eigenfunction_order", value, 1.8, value >= 1.8,
                   error_coarse=errors[0], error_fine=errors[-1])


def check_swirl_bochner_order(tau_max: float, n_omega: int = 4,
                              volumes: str = "midpoint") -> EstimateReport:
    """
    Bochner Laplacian of the d = 2 swirl b(tau) e_phi against the closed form
    b'' + coth b' - coth^2 b, observed order over two refinements.
    """
    center, width = 0.35 * tau_max, 0.1 * tau_max

    def profile(tau: np.ndarray, phi: np.ndarray) -> np.ndarray:
        return np.exp(-((tau - center) / width) ** 2) + 0.0 * phi

    errors = []
    for n_tau in (32, 64, 128):
        grid = build_grid(2, tau_max, n_tau, n_omega, volumes)
        v = sample_vector(grid, lambda tau, phi: np.zeros_like(tau), profile)
        out = bochner_laplacian(v).components[1, :, 0]
        tau = grid.tau_nodes
        b = profile(tau, 0.0)
        db = -2.0 * (tau - center) / width ** 2 * b
        ddb = (4.0 * (tau - center) ** 2 / width ** 4 - 2.0 / width ** 2) * b
        coth = 1.0 / np.tanh(tau)
        exact = ddb + coth * db - coth ** 2 * b
        errors.append(float(np.max(np.abs(out - exact)) / np.max(np.abs(exact))))
    orders = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
    value = min(orders)
    return _report("swirl_bochner_order", value, 1.8, value >= 1.8,
                   error_coarse=errors[0], error_fine=errors[-1])


def check_tensor_divergence(grid: ManifoldGrid) -> EstimateReport:
    """div(f g) = grad f for the scaled metric."""
    f = sample_scalar(grid, _bump(0.35 * grid.tau_max, 0.1 * grid.tau_max))
    lhs = div_tensor(TensorField.scaled_metric(f))
    rhs = grad_scalar(f)
    value = lp_norm(lhs - rhs, 2.0) / max(lp_norm(rhs, 2.0), 1e-300)
    return _report("metric_tensor_divergence", value, 1e-10, value <= 1e-10)


# ---------------------------------------------------------------------------
# Heat kernel and semigroup
# ---------------------------------------------------------------------------


def check_kernel_mass(d: int) -> List[EstimateReport]:
    out = []
    for t in (0.1, 1.0):
        value = abs(heat_kernel_mass(d, t) - 1.0)
        out.append(_report(f"kernel_mass_t{t:g}", value, 1e-6, value <= 1e-6, t=t))
    return out


def check_cn_vs_kernel(cfg: SemigroupConfig, tau_max: float, n_tau: int,
                       t: float = 0.5, volumes: str = "midpoint") -> EstimateReport:
    """Theta-scheme against the closed-form H^3 kernel on radial data, same grid."""
    grid = build_grid(3, tau_max, n_tau, 1, volumes)
    f = sample_scalar(grid, _bump(0.35 * tau_max, 0.15 * tau_max))
    cn = semigroup_cn_apply(f, t, cfg)
    kernel = scalar_semigroup_kernel_apply(f, t)
    value = _relative_l2(cn, kernel)
    return _report("cn_vs_kernel", value, 1e-3, value <= 1e-3, n_tau=n_tau, t=t)


def check_kernel_mass_conservation(grid: ManifoldGrid, t: float = 0.5) -> EstimateReport:
    f = sample_scalar(grid, _bump(0.25 * grid.tau_max, 0.06 * grid.tau_max))
    out = scalar_semigroup_kernel_apply(f, t)
    before = float(np.sum(grid.weights * f.values))
    after = float(np.sum(grid.weights * out.values))
    value = abs(after - before) / before
    return _report("kernel_mass_conservation", value, 0.01, value <= 0.01, t=t)


def check_approximate_identity(grid: ManifoldGrid, t: float = 1e-3) -> EstimateReport:
    f = sample_scalar(grid, _bump(0.3 * grid.tau_max, 0.1 * grid.tau_max))
    value = _relative_l2(scalar_semigroup_kernel_apply(f, t), f)
    return _report("approximate_identity", value, 0.05, value <= 0.05, t=t)


def check_dispersive_slope(d: int, n_tau: int = 512, tau_max: float = 3.0) -> EstimateReport:
    """Small-time log-log slope of ||e^{t Delta} delta||_inf / ||delta||_1 (expected -d/2)."""
    n_omega = 1 if d == 3 else 4
    grid = build_grid(d, tau_max, n_tau, n_omega)
    source = np.zeros(grid.shape)
    source[0, :] = 1.0
    f = ScalarField(grid, source)
    mass = lp_norm(f, 1.0)
    times = np.geomspace(0.01, 0.1, 8)
    peaks = [lp_norm(scalar_semigroup_kernel_apply(f, float(t)), math.inf) / mass
             for t in times]
    slope = float(stats.linregress(np.log(times), np.log(peaks)).slope)
    target = -d / 2.0
    value = abs(slope - target) / abs(target)
    return _report("dispersive_slope", value, 0.1, value <= 0.1, slope=slope)


def check_dispersive_dominance(grid: ManifoldGrid, cfg: SemigroupConfig,
                               rng: np.random.Generator, n_samples: int) -> EstimateReport:
    """
    ||e^{t Delta} theta0||_inf / (dispersive_bound(1, inf, t) ||theta0||_1) over
    t in [0.05, 5] for nonnegative random data. The fitted constant must stay
    below DISPERSIVE_CONSTANT both for t <= SMALL_T_MAX and beyond.
    """
    times = np.geomspace(0.05, 5.0, 12)
    worst = 0.0
    small_t = large_t = 0.0
    for _ in range(n_samples):
        theta = sample_scalar(grid, lambda tau, phi: np.zeros_like(tau))
        for _ in range(2):
            theta = theta + _compact_bump(grid, rng, angular=False) * float(rng.uniform(0.2, 1.0))
        mass = lp_norm(theta, 1.0)
        current, elapsed = theta, 0.0
        for t in times:
            current = semigroup_cn_apply(current, float(t) - elapsed, cfg)  # type: ignore[assignment]
            elapsed = float(t)
            ratio = lp_norm(current, math.inf) / (dispersive_bound(1.0, math.inf, elapsed,
                                                                   cfg, grid.d) * mass)
            worst = max(worst, ratio)
            if elapsed <= SMALL_T_MAX:
                small_t = max(small_t, ratio)
            else:
                large_t = max(large_t, ratio)
    passed = small_t <= DISPERSIVE_CONSTANT and large_t <= DISPERSIVE_CONSTANT
    return _report("dispersive_dominance", worst, DISPERSIVE_CONSTANT, passed,
                   K_small_t=small_t, K_large_t=large_t, samples=n_samples)


def check_smoothing(grid: ManifoldGrid, cfg: SemigroupConfig, p: float,
                    rng: np.random.Generator, n_samples: int) -> EstimateReport:
    """
    ||e^{t Delta} div f||_p / ||f||_{p/2} and ||e^{tL} P div F||_p / ||F||_{p/2}
    against the smoothing bound, with and without the retained Ricci factor.
    Both regimes of t must stay below SMOOTHING_CONSTANT.
    """
    q, r = p, p / 2.0
    times = np.geomspace(0.05, 5.0, 8)
    small_t = large_t = vector_k_ricci = 0.0
    for _ in range(n_samples):
        F, f = random_sources(grid, rng)
        heat, velocity = div_vector(f), leray_project(div_tensor(F))
        f_norm, F_norm = lp_norm(f, r), lp_norm(F, r)
        elapsed = 0.0
        for t in times:
            step = float(t) - elapsed
            heat = semigroup_cn_apply(heat, step, cfg)  # type: ignore[assignment]
            velocity = semigroup_cn_apply(velocity, step, cfg)  # type: ignore[assignment]
            elapsed = float(t)
            plain = smoothing_bound(r, q, elapsed, cfg, grid.d)
            ricci = smoothing_bound(r, q, elapsed, cfg, grid.d, retain_ricci=True)
            ratio = 0.0
            if f_norm > 0:
                ratio = lp_norm(heat, q) / (plain * f_norm)
            if F_norm > 0:
                ratio = max(ratio, lp_norm(velocity, q) / (plain * F_norm))
                vector_k_ricci = max(vector_k_ricci, lp_norm(velocity, q) / (ricci * F_norm))
            if elapsed <= SMALL_T_MAX:
                small_t = max(small_t, ratio)
            else:
                large_t = max(large_t, ratio)
    worst = max(small_t, large_t)
    passed = small_t <= SMOOTHING_CONSTANT and large_t <= SMOOTHING_CONSTANT
    return _report("smoothing_estimate", worst, SMOOTHING_CONSTANT, passed,
                   K_small_t=small_t, K_large_t=large_t, K_vector_with_ricci=vector_k_ricci)


# ---------------------------------------------------------------------------
# Projector
# ---------------------------------------------------------------------------


def check_projector(grid: ManifoldGrid, rng: np.random.Generator,
                    n_fields: int = 50, p: float = 4.0) -> List[EstimateReport]:
    """Annihilation of gradients, identity on rot* images, idempotence and K_p."""
    annihilate = fix = idempotent = divergence = k_p = 0.0
    for _ in range(n_fields):
        g = grad_scalar(_compact_bump(grid, rng, angular=True))
        annihilate = max(annihilate, lp_norm(leray_project(g), 2.0) / lp_norm(g, 2.0))

        v = random_state(grid, rng).u + sample_vector(
            grid, lambda tau, phi: rng.normal() * np.exp(-(tau - 1.5) ** 2))
        pv = leray_project(v)
        v_norm = max(lp_norm(v, 2.0), 1e-300)
        idempotent = max(idempotent, lp_norm(leray_project(pv) - pv, 2.0) / v_norm)
        divergence = max(divergence, lp_norm(div_vector(pv), 2.0) / v_norm)
        k_p = max(k_p, lp_norm(pv, p) / max(lp_norm(v, p), 1e-300))

        if grid.d == 2:
            w = rot_adjoint(_compact_bump(grid, rng, angular=True).values, grid)
            fix = max(fix, lp_norm(leray_project(w) - w, 2.0) / lp_norm(w, 2.0))
    # leray_project is self-adjoint in the energy inner product
    a, b = random_state(grid, rng).u, random_state(grid, rng).u
    symmetry = abs(inner(leray_project(a), b) - inner(a, leray_project(b)))
    return [
        _report("projector_annihilates_gradients", annihilate, 1e-6, annihilate <= 1e-6),
        _report("projector_fixes_solenoidal", fix, 1e-10, fix <= 1e-10),
        _report("projector_idempotent", idempotent, 1e-8, idempotent <= 1e-8),
        _report("projector_divergence", divergence, 1e-8, divergence <= 1e-8,
                symmetry=symmetry),
        _report("projector_bound", k_p, PROJECTOR_CONSTANT, k_p <= PROJECTOR_CONSTANT, p=p),
    ]


def run_semigroup_suite(config: ExperimentConfig) -> List[EstimateReport]:
    """All operator and semigroup checks for the configured grid."""
    m = config.manifold
    grid = build_grid(m.d, m.tau_max, m.n_tau, m.n_omega, m.cell_volumes)
    rng = np.random.default_rng(config.experiment.seed)
    sg = config.semigroup
    n = config.experiment.n_samples
    radial3 = build_grid(3, m.tau_max, m.n_tau, 1, m.cell_volumes)

    reports: List[EstimateReport] = [
        check_divergence_theorem(grid, rng),
        check_eigenfunction_order(m.d, m.tau_max, m.n_omega, m.cell_volumes),
        check_swirl_bochner_order(m.tau_max, volumes=m.cell_volumes),
        check_tensor_divergence(grid),
    ]
    reports.extend(check_kernel_mass(3))
    reports.append(check_cn_vs_kernel(sg, m.tau_max, m.n_tau, volumes=m.cell_volumes))
    reports.append(check_kernel_mass_conservation(radial3))
    reports.append(check_approximate_identity(radial3))
    reports.append(check_dispersive_slope(m.d))
    reports.append(check_dispersive_dominance(grid, sg, rng, n))
    reports.append(check_smoothing(grid, sg, config.solver.p, rng, min(n, 5)))
    reports.extend(check_projector(grid, rng, p=config.solver.p))
    return reports
