"""
Heat semigroups of the scalar and vector generators.

    scalar   e^{t Delta_g}              theta-scheme on laplacian_matrix
    vector   e^{t L}, L = Bochner - (d-1)   theta-scheme on bochner_matrix times e^{-(d-1)t}

The zeroth-order shift commutes with every substep, so it is applied as an
exact factor. Radial scalar data can also be propagated through the
closed-form hyperbolic heat kernel, which serves as the accuracy oracle.
"""

import math
from typing import Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy import integrate, interpolate
from scipy.sparse.linalg import splu

from hypbq.exceptions import SemigroupError
from hypbq.models.experiment import SemigroupConfig
from hypbq.services.geometry import ManifoldGrid, ScalarField, State, VectorField
from hypbq.utils.logging import get_logger

logger = get_logger(__name__)

MIN_SUBSTEPS = 4
_D2_TABLE_POINTS = 1201
_ANGULAR_NODES = 96
_RADIAL_NODES = 6
_KERNEL_CELL_SPLIT = 3.0


# ---------------------------------------------------------------------------
# Dispersive and smoothing bounds
# ---------------------------------------------------------------------------


def _reciprocal(p: float) -> float:
    return 0.0 if math.isinf(p) else 1.0 / p


def _check_exponents(p: float, q: float) -> None:
    if not 1.0 <= p <= q:
        raise SemigroupError(
            f"Exponents must satisfy 1 <= p <= q (p={p}, q={q})",
            error_code="EXPONENT_ORDER",
            details={"p": p, "q": q},
        )


def _check_time(t: float) -> None:
    if not t > 0:
        raise SemigroupError(f"Time must be positive, got {t}",
                             error_code="TIME_NOT_POSITIVE", details={"t": t})


def h_d(t: float, cfg: SemigroupConfig, d: int) -> float:
    """
    Dispersive prefactor h_d(t) = C max(t^{-d/2}, 1).

    Example:
        >>> h_d(0.25, SemigroupConfig(), 3)
        8.0
    """
    _check_time(t)
    return cfg.C * max(t ** (-d / 2.0), 1.0)


def gamma_pq(p: float, q: float, delta_d: float) -> float:
    """
    Decay rate gamma_{p,q} = (delta_d/2) [(1/p - 1/q) + (8/q)(1 - 1/p)].

    Infinite exponents enter through 1/inf = 0.
    """
    _check_exponents(p, q)
    ip, iq = _reciprocal(p), _reciprocal(q)
    return 0.5 * delta_d * ((ip - iq) + 8.0 * iq * (1.0 - ip))


def dispersive_bound(p: float, q: float, t: float, cfg: SemigroupConfig, d: int) -> float:
    """L^p -> L^q bound of e^{t Delta_g}: h_d(t)^{1/p-1/q} e^{-t gamma_{p,q}}."""
    _check_exponents(p, q)
    rate = gamma_pq(p, q, cfg.spectral_constant(d))
    return h_d(t, cfg, d) ** (_reciprocal(p) - _reciprocal(q)) * math.exp(-t * rate)


def smoothing_bound(
    p: float,
    q: float,
    t: float,
    cfg: SemigroupConfig,
    d: int,
    retain_ricci: bool = False,
) -> float:
    """
    L^p -> L^q bound of e^{tL} P div:
    h_d(t)^{1/p-1/q+1/d} e^{-t (gamma_{q,q} + gamma_{p,q})/2}.

    With retain_ricci the e^{-(d-1)t} factor of the vector generator is kept.
    """
    _check_exponents(p, q)
    delta_d = cfg.spectral_constant(d)
    rate = 0.5 * (gamma_pq(q, q, delta_d) + gamma_pq(p, q, delta_d))
    exponent = _reciprocal(p) - _reciprocal(q) + 1.0 / d
    bound = h_d(t, cfg, d) ** exponent * math.exp(-t * rate)
    if retain_ricci:
        bound *= math.exp(-(d - 1) * t)
    return bound


# ---------------------------------------------------------------------------
# Closed-form heat kernels
# ---------------------------------------------------------------------------


def _kernel_h3(t: float, r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    ratio = np.ones_like(r)
    nz = r > 1e-8
    ratio[nz] = r[nz] / np.sinh(r[nz])
    ratio[~nz] = 1.0 - r[~nz] ** 2 / 6.0
    return (4.0 * math.pi * t) ** -1.5 * math.exp(-t) * ratio * np.exp(-r ** 2 / (4.0 * t))


def _kernel_h2_point(t: float, rho: float) -> float:
    # substitution cosh s = cosh rho + v^2 removes the endpoint singularity
    cosh_rho = math.cosh(rho)

    def integrand(v: float) -> float:
        s = math.acosh(cosh_rho + v * v)
        ratio = 1.0 if s < 1e-8 else s / math.sinh(s)
        return 2.0 * ratio * math.exp(-s * s / (4.0 * t))

    s_max = math.sqrt(rho * rho + 160.0 * t) + 1.0
    v_max = math.sqrt(math.cosh(s_max) - cosh_rho)
    hint = math.sqrt(max(math.cosh(rho + math.sqrt(t)) - cosh_rho, 1e-12))
    value, _ = integrate.quad(integrand, 0.0, v_max, points=[min(hint, v_max)],
                              limit=200, epsabs=0.0, epsrel=1e-11)
    return math.sqrt(2.0) * math.exp(-t / 4.0) / (4.0 * math.pi * t) ** 1.5 * value


def heat_kernel_closed(d: int, t: float, r: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Heat kernel p_t(r) of H^d at geodesic distance r.

    d = 3 is closed form; d = 2 uses the one-dimensional integral
    representation evaluated by adaptive quadrature.
    """
    _check_time(t)
    if d not in (2, 3):
        raise SemigroupError(f"Heat kernel is only available for d = 2, 3, got {d}",
                             details={"d": d})
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise SemigroupError("Geodesic distance must be nonnegative",
                             error_code="DISTANCE_NEGATIVE")
    if d == 3:
        out = _kernel_h3(t, r_arr)
    else:
        out = np.vectorize(lambda rho: _kernel_h2_point(t, float(rho)))(r_arr)
    return float(out) if np.ndim(r) == 0 else out


def heat_kernel_mass(d: int, t: float) -> float:
    """Integral of p_t over H^d (stochastic completeness gives 1)."""
    _check_time(t)
    peak = (d - 1) * t
    upper = peak + 40.0 * math.sqrt(t) + 10.0
    sphere = 4.0 * math.pi if d == 3 else 2.0 * math.pi

    def density(r: float) -> float:
        return sphere * math.sinh(r) ** (d - 1) * float(heat_kernel_closed(d, t, r))

    value, _ = integrate.quad(density, 0.0, upper, points=[peak] if peak > 0 else None,
                              limit=400, epsabs=0.0, epsrel=1e-10)
    return value


def _radial_profile(f: ScalarField) -> np.ndarray:
    if not f.is_radial():
        raise SemigroupError("Kernel propagation needs radial data",
                             error_code="NON_RADIAL")
    return f.values[:, 0]


def _kernel_apply_h3(grid: ManifoldGrid, t: float, profile: np.ndarray) -> np.ndarray:
    # sinh(tau) u solves w_t = w'' - w on the half line with w(0) = 0; the
    # source is the odd cubic spline through the nodes, zero at tau_max
    tau = grid.tau_nodes
    w = grid.sinh_nodes * profile
    knots = np.concatenate([[-grid.tau_max], -tau[::-1], tau, [grid.tau_max]])
    data = np.concatenate([[0.0], -w[::-1], w, [0.0]])
    source = interpolate.CubicSpline(knots, data)

    width = math.sqrt(2.0 * t)
    n_sub = max(1, math.ceil(_KERNEL_CELL_SPLIT * grid.dtau / width))
    edges = np.linspace(0.0, grid.tau_max, grid.n_tau * n_sub + 1)
    nodes, node_weights = np.polynomial.legendre.leggauss(_RADIAL_NODES)
    half = 0.5 * np.diff(edges)
    s = (0.5 * (edges[:-1] + edges[1:])[:, None] + half[:, None] * nodes[None, :]).ravel()
    ds = (half[:, None] * node_weights[None, :]).ravel()

    scale = 4.0 * t
    kernel = (np.exp(-(tau[:, None] - s[None, :]) ** 2 / scale)
              - np.exp(-(tau[:, None] + s[None, :]) ** 2 / scale)) / math.sqrt(math.pi * scale)
    return math.exp(-t) * (kernel @ (ds * source(s))) / grid.sinh_nodes


def _kernel_matrix_h2(grid: ManifoldGrid, t: float, columns: np.ndarray) -> np.ndarray:
    key = ("kernel_table_h2", t)
    table = grid.cache.get(key)
    if table is None:
        radii = np.linspace(0.0, 2.0 * grid.tau_max, _D2_TABLE_POINTS)
        table = (radii, np.asarray(heat_kernel_closed(2, t, radii)))
        grid.cache[key] = table
    radii, values = table
    nodes, node_weights = np.polynomial.legendre.leggauss(_ANGULAR_NODES)
    angles = 0.5 * math.pi * (nodes + 1.0)
    angle_weights = math.pi * node_weights      # doubled half-circle
    ch, sh = np.cosh(grid.tau_nodes), grid.sinh_nodes
    ch_src, sh_src = ch[columns], sh[columns]
    cosh_rho = (ch[:, None, None] * ch_src[None, :, None]
                - sh[:, None, None] * sh_src[None, :, None] * np.cos(angles)[None, None, :])
    rho = np.arccosh(np.maximum(cosh_rho, 1.0))
    kernel = np.interp(rho, radii, values, right=0.0)
    ring = kernel @ angle_weights
    return ring * (sh_src * grid.dtau)[None, :]


def scalar_semigroup_kernel_apply(f: ScalarField, t: float) -> ScalarField:
    """
    Propagate radial data with the closed-form kernel.

    d = 3 integrates the kernel against a cubic spline of sinh(tau) f with
    Gauss-Legendre quadrature, refined when the kernel is narrower than a cell;
    d = 2 convolves a tabulated kernel with Gauss-Legendre angular quadrature.
    """
    _check_time(t)
    grid = f.grid
    profile = _radial_profile(f)
    if grid.d == 3:
        out = _kernel_apply_h3(grid, t, profile)
    else:
        # only source cells carrying heat enter the angular quadrature
        columns = np.flatnonzero(profile)
        out = _kernel_matrix_h2(grid, t, columns) @ profile[columns]
    return ScalarField(grid, np.repeat(out[:, None], grid.n_omega, axis=1))


# ---------------------------------------------------------------------------
# Theta-scheme propagation
# ---------------------------------------------------------------------------


def substeps(t: float, cfg: SemigroupConfig) -> int:
    """Number of theta-scheme substeps used for a time span t."""
    return max(MIN_SUBSTEPS, math.ceil(t * cfg.cn_steps_per_unit_time - 1e-9))


def _factorization(grid: ManifoldGrid, kind: str, dt: float, theta: float) -> Tuple[object, sp.csr_matrix]:
    key = (kind, dt, theta)
    cached = grid.cache.get(key)
    if cached is not None:
        return cached
    generator = grid.laplacian_matrix if kind == "scalar" else grid.bochner_matrix
    eye = sp.identity(generator.shape[0], format="csc")
    implicit = sp.csc_matrix(eye - theta * dt * generator)
    explicit = sp.csr_matrix(eye + (1.0 - theta) * dt * generator)
    try:
        lu = splu(implicit)
    except RuntimeError as exc:
        raise SemigroupError(
            f"Implicit step matrix is singular: {exc}",
            error_code="SEMIGROUP_SINGULAR",
            details={"kind": kind, "dt": dt},
        ) from exc
    grid.cache[key] = (lu, explicit)
    logger.debug("Factorized theta-scheme step",
                 extra={"kind": kind, "dt": dt, "unknowns": generator.shape[0]})
    return grid.cache[key]


def _propagate(flat: np.ndarray, grid: ManifoldGrid, kind: str, t: float,
               cfg: SemigroupConfig) -> np.ndarray:
    n_sub = substeps(t, cfg)
    dt = t / n_sub
    lu, explicit = _factorization(grid, kind, dt, cfg.theta_scheme)
    x = flat
    for _ in range(n_sub):
        x = lu.solve(explicit @ x)
    if not np.all(np.isfinite(x)):
        raise SemigroupError("Theta-scheme produced non-finite values",
                             error_code="SEMIGROUP_NOT_FINITE", details={"t": t})
    return x


def semigroup_cn_apply(
    x: Union[ScalarField, VectorField],
    t: float,
    cfg: SemigroupConfig,
    ricci_shift: bool = True,
) -> Union[ScalarField, VectorField]:
    """
    Apply e^{t Delta_g} to a scalar field or e^{tL} to a vector field.

    ricci_shift=False drops the -(d-1) term of L and propagates with the
    Bochner Laplacian alone.
    """
    if t < 0:
        raise SemigroupError(f"Time must be nonnegative, got {t}",
                             error_code="TIME_NEGATIVE", details={"t": t})
    if t == 0:
        return x
    grid = x.grid
    if isinstance(x, ScalarField):
        if not np.any(x.values):
            return x
        out = _propagate(x.values.ravel(), grid, "scalar", t, cfg)
        return ScalarField(grid, out.reshape(grid.shape))
    if not np.any(x.components):
        return x
    out = _propagate(x.components.ravel(), grid, "vector", t, cfg)
    if ricci_shift:
        out = out * math.exp(-(grid.d - 1) * t)
    return VectorField(grid, out.reshape(x.components.shape))


def matrix_semigroup_apply(s: State, t: float, cfg: SemigroupConfig) -> State:
    """Block-diagonal e^{-tA}: vector semigroup on u, scalar semigroup on theta."""
    u = semigroup_cn_apply(s.u, t, cfg)
    theta = semigroup_cn_apply(s.theta, t, cfg)
    return State(u, theta, s.t + t)  # type: ignore[arg-type]


def _generator_factor(grid: ManifoldGrid, kind: str):  # type: ignore[no-untyped-def]
    key = ("generator", kind)
    cached = grid.cache.get(key)
    if cached is None:
        if kind == "scalar":
            generator = -grid.laplacian_matrix
        else:
            generator = (grid.d - 1) * sp.identity(grid.bochner_matrix.shape[0]) - grid.bochner_matrix
        try:
            cached = splu(sp.csc_matrix(generator))
        except RuntimeError as exc:
            raise SemigroupError(
                f"Generator is singular: {exc}",
                error_code="SEMIGROUP_SINGULAR",
                details={"kind": kind},
            ) from exc
        grid.cache[key] = cached
    return cached


def generator_solve(s: State) -> State:
    """
    A^{-1} s for the block generator A = diag(-L, -Delta_g) of e^{-tA}.

    Both blocks are positive definite: the odd ghost at tau_max removes the
    constants from the kernel of Delta_g and L <= -2(d-1).
    """
    grid = s.grid
    u = s.u.components.ravel()
    theta = s.theta.values.ravel()
    if np.any(u):
        u = _generator_factor(grid, "vector").solve(u)
    if np.any(theta):
        theta = _generator_factor(grid, "scalar").solve(theta)
    return State(VectorField(grid, u.reshape(s.u.components.shape)),
                 ScalarField(grid, theta.reshape(grid.shape)), s.t)
