"""
Truncated geodesic-polar discretization of H^d, d in {2, 3}.

Layout (staggered, so that grad is exactly the negative weighted adjoint of
div and curl(grad) vanishes identically):

    scalars      cell centers        (tau_j, phi_k)            tau_j = (j + 1/2) dtau
    a_tau        radial faces        ((j + 1) dtau, phi_k)     last row sits on tau_max
    a_phi        angular faces       (tau_j, phi_k + dphi/2)   d = 2 only
    curl         vertices            ((j + 1) dtau, phi_k + dphi/2)
    tensors      cell centers

Scalars vanish at tau_max (odd ghost). The face at tau = 0 has zero area,
so no ghost is needed there for fluxes; interpolation across the origin
uses the parity of the frame (phi -> phi + pi flips e_tau and e_phi).

d = 3 carries radial fields only (n_omega = 1, one frame component).
"""

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, Union

import numpy as np
import scipy.sparse as sp

from hypbq.exceptions import FieldError, GridError

SparseMatrix = sp.csr_matrix

# "midpoint": sinh^{d-1}(tau_j) dtau domega; "exact": int over the cell
VOLUME_RULES = ("midpoint", "exact")


@dataclass(frozen=True, eq=False)
class ManifoldGrid:
    """
    Immutable grid on H^d with metric dtau^2 + sinh^2(tau) domega^2.

    Operator matrices are assembled lazily and cached on the instance;
    grids compare by identity.
    """

    d: int
    tau_max: float
    n_tau: int
    n_omega: int
    volumes: str = "midpoint"
    cache: Dict[Any, Any] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.d not in (2, 3):
            raise GridError(f"Dimension must be 2 or 3, got {self.d}",
                            details={"d": self.d})
        if not self.tau_max > 0:
            raise GridError(f"tau_max must be positive, got {self.tau_max}",
                            details={"tau_max": self.tau_max})
        if self.n_tau < 8:
            raise GridError(f"n_tau must be at least 8, got {self.n_tau}",
                            details={"n_tau": self.n_tau})
        if self.d == 3 and self.n_omega != 1:
            raise GridError(
                "d = 3 supports radial fields only (n_omega = 1)",
                error_code="GRID_RADIAL_ONLY",
                details={"n_omega": self.n_omega},
            )
        if self.d == 2 and (self.n_omega < 4 or self.n_omega % 2):
            raise GridError(
                f"d = 2 needs an even n_omega >= 4, got {self.n_omega}",
                details={"n_omega": self.n_omega},
            )
        if self.volumes not in VOLUME_RULES:
            raise GridError(
                f"Unknown cell volume rule {self.volumes!r}",
                details={"volumes": self.volumes, "allowed": list(VOLUME_RULES)},
            )

    # -- coordinates ---------------------------------------------------

    @property
    def shape(self) -> tuple:
        return (self.n_tau, self.n_omega)

    @property
    def size(self) -> int:
        return self.n_tau * self.n_omega

    @property
    def n_frame(self) -> int:
        """Number of stored vector components (2 for d = 2, 1 for radial d = 3)."""
        return 2 if self.d == 2 else 1

    @property
    def dtau(self) -> float:
        return self.tau_max / self.n_tau

    @property
    def dphi(self) -> float:
        return 2.0 * math.pi / self.n_omega

    @property
    def domega(self) -> float:
        # full-sphere measure in the radial d = 3 mode
        return self.dphi if self.d == 2 else 4.0 * math.pi

    @cached_property
    def tau_nodes(self) -> np.ndarray:
        return (np.arange(self.n_tau) + 0.5) * self.dtau

    @cached_property
    def tau_faces(self) -> np.ndarray:
        return (np.arange(self.n_tau) + 1.0) * self.dtau

    @cached_property
    def phi_nodes(self) -> np.ndarray:
        return np.arange(self.n_omega) * self.dphi

    @cached_property
    def phi_faces(self) -> np.ndarray:
        return (np.arange(self.n_omega) + 0.5) * self.dphi

    @cached_property
    def sinh_nodes(self) -> np.ndarray:
        return np.sinh(self.tau_nodes)

    @cached_property
    def sinh_faces(self) -> np.ndarray:
        return np.sinh(self.tau_faces)

    # -- quadrature weights ---------------------------------------------

    @cached_property
    def weights(self) -> np.ndarray:
        """
        Cell weights, shape (n_tau, n_omega).

        The default midpoint rule sinh^{d-1}(tau_j) dtau domega makes div the
        conservative difference of sinh^{d-1} a_tau. The "exact" rule
        integrates sinh^{d-1} over each cell instead; it keeps the d = 3
        origin cell consistent, where the midpoint value is 3/4 of the volume.
        """
        if self.volumes == "midpoint":
            radial = self.sinh_nodes ** (self.d - 1) * self.dtau
        else:
            a = self.tau_nodes - 0.5 * self.dtau
            b = self.tau_nodes + 0.5 * self.dtau
            if self.d == 2:
                radial = np.cosh(b) - np.cosh(a)
            else:
                radial = 0.25 * (np.sinh(2.0 * b) - np.sinh(2.0 * a)) - 0.5 * self.dtau
        w = radial * self.domega
        return np.repeat(w[:, None], self.n_omega, axis=1)

    @cached_property
    def face_weights(self) -> np.ndarray:
        """Weights of the staggered vector unknowns, shape (n_frame, n_tau, n_omega)."""
        radial = self.sinh_faces ** (self.d - 1) * self.dtau * self.domega
        radial = radial.copy()
        radial[-1] *= 0.5
        out = [np.repeat(radial[:, None], self.n_omega, axis=1)]
        if self.d == 2:
            out.append(self.weights.copy())
        return np.stack(out)

    @cached_property
    def vertex_weights(self) -> np.ndarray:
        w = self.sinh_faces * self.dtau * self.dphi
        w = w.copy()
        w[-1] *= 0.5
        return np.repeat(w[:, None], self.n_omega, axis=1)

    # -- operator matrices ----------------------------------------------

    @cached_property
    def _angular_difference(self) -> SparseMatrix:
        # (Df)_k = f_{k+1} - f_k, periodic
        n = self.n_omega
        return sp.csr_matrix(
            sp.diags([-np.ones(n), np.ones(n - 1), np.ones(1)], [0, 1, -(n - 1)],
                     shape=(n, n))
        )

    @cached_property
    def _radial_difference(self) -> SparseMatrix:
        # (Df)_j = f_{j+1} - f_j with odd ghost f_N = -f_{N-1}
        n = self.n_tau
        main = -np.ones(n)
        main[-1] = -2.0
        return sp.csr_matrix(sp.diags([main, np.ones(n - 1)], [0, 1], shape=(n, n)))

    @cached_property
    def grad_matrix(self) -> SparseMatrix:
        """Cells -> faces gradient in orthonormal frame components."""
        eye = sp.identity(self.n_omega, format="csr")
        blocks = [sp.kron(self._radial_difference / self.dtau, eye)]
        if self.d == 2:
            blocks.append(sp.kron(sp.diags(1.0 / self.sinh_nodes),
                                  self._angular_difference / self.dphi))
        return sp.csr_matrix(sp.vstack(blocks))

    @cached_property
    def div_matrix(self) -> SparseMatrix:
        """Faces -> cells divergence, the negative weighted adjoint of grad."""
        wc = self.weights.ravel()
        wf = self.face_weights.ravel()
        return sp.csr_matrix(-sp.diags(1.0 / wc) @ self.grad_matrix.T @ sp.diags(wf))

    @cached_property
    def laplacian_matrix(self) -> SparseMatrix:
        return sp.csr_matrix(self.div_matrix @ self.grad_matrix)

    @cached_property
    def rot_matrix(self) -> SparseMatrix:
        """Faces -> vertices scalar curl (d = 2); empty for the radial d = 3 mode."""
        n_faces = self.n_frame * self.size
        if self.d == 3:
            return sp.csr_matrix((0, n_faces))
        n = self.n_tau
        sc = self.sinh_nodes
        # s*b has an odd ghost at tau_max so that rot(grad) = 0 on the boundary row
        main = -sc.copy()
        main[-1] = -2.0 * sc[-1]
        mb = sp.diags([main, sc[1:]], [0, 1], shape=(n, n)) / self.dtau
        inv_sf = sp.diags(1.0 / self.sinh_faces)
        eye = sp.identity(self.n_omega, format="csr")
        rot_a = -sp.kron(inv_sf, self._angular_difference / self.dphi)
        rot_b = sp.kron(inv_sf @ mb, eye)
        return sp.csr_matrix(sp.hstack([rot_a, rot_b]))

    @cached_property
    def rot_adjoint_matrix(self) -> SparseMatrix:
        wf = self.face_weights.ravel()
        if self.d == 3:
            return sp.csr_matrix((wf.size, 0))
        wv = self.vertex_weights.ravel()
        return sp.csr_matrix(sp.diags(1.0 / wf) @ self.rot_matrix.T @ sp.diags(wv))

    @cached_property
    def bochner_matrix(self) -> SparseMatrix:
        """
        Rough Laplacian in Weitzenboeck form grad div - rot* rot + Ric, Ric = -(d-1).
        """
        n_faces = self.n_frame * self.size
        hodge = self.grad_matrix @ self.div_matrix
        if self.d == 2:
            hodge = hodge - self.rot_adjoint_matrix @ self.rot_matrix
        return sp.csr_matrix(hodge - (self.d - 1) * sp.identity(n_faces))


def build_grid(d: int, tau_max: float, n_tau: int, n_omega: int,
               volumes: str = "midpoint") -> ManifoldGrid:
    """
    Build a validated grid.

    Example:
        >>> grid = build_grid(2, 6.0, 64, 32)
        >>> grid.size, grid.tau_nodes[0]
        (2048, 0.046875)
    """
    return ManifoldGrid(d=int(d), tau_max=float(tau_max), n_tau=int(n_tau),
                        n_omega=int(n_omega), volumes=volumes)


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------


def _check_same_grid(a: ManifoldGrid, b: ManifoldGrid) -> None:
    if a is not b:
        raise GridError("Fields live on different grids", error_code="GRID_MISMATCH")


def _check_finite(values: np.ndarray, kind: str) -> None:
    if not np.all(np.isfinite(values)):
        raise FieldError(f"{kind} contains non-finite values",
                         error_code="FIELD_NOT_FINITE")


class _FieldArithmetic:
    """Vector-space operations shared by all field types."""

    grid: ManifoldGrid
    # let numpy scalars defer to __rmul__
    __array_ufunc__ = None

    def _data(self) -> np.ndarray:
        raise NotImplementedError

    def _new(self, data: np.ndarray) -> Any:
        return type(self)(self.grid, data)

    def __add__(self, other: Any) -> Any:
        _check_same_grid(self.grid, other.grid)
        return self._new(self._data() + other._data())

    def __sub__(self, other: Any) -> Any:
        _check_same_grid(self.grid, other.grid)
        return self._new(self._data() - other._data())

    def __mul__(self, scalar: float) -> Any:
        return self._new(self._data() * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> Any:
        return self._new(-self._data())


@dataclass(frozen=True, eq=False)
class ScalarField(_FieldArithmetic):
    """Cell-centered samples, shape (n_tau, n_omega)."""

    grid: ManifoldGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise FieldError(
                f"Scalar field shape {values.shape} does not match grid {self.grid.shape}",
                error_code="FIELD_SHAPE",
            )
        _check_finite(values, "ScalarField")
        object.__setattr__(self, "values", values)

    def _data(self) -> np.ndarray:
        return self.values

    @classmethod
    def zeros(cls, grid: ManifoldGrid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    def is_radial(self, rtol: float = 1e-12) -> bool:
        spread = np.ptp(self.values, axis=1)
        return bool(np.all(spread <= rtol * max(np.max(np.abs(self.values)), 1e-300)))


@dataclass(frozen=True, eq=False)
class VectorField(_FieldArithmetic):
    """
    Orthonormal-frame components on the staggered faces,
    shape (n_frame, n_tau, n_omega): [a_tau, a_phi] for d = 2, [a_tau] for d = 3.
    """

    grid: ManifoldGrid
    components: np.ndarray

    def __post_init__(self) -> None:
        comps = np.asarray(self.components, dtype=float)
        expected = (self.grid.n_frame,) + self.grid.shape
        if comps.shape != expected:
            raise FieldError(
                f"Vector field shape {comps.shape} does not match {expected}",
                error_code="FIELD_SHAPE",
            )
        _check_finite(comps, "VectorField")
        object.__setattr__(self, "components", comps)

    def _data(self) -> np.ndarray:
        return self.components

    @classmethod
    def zeros(cls, grid: ManifoldGrid) -> "VectorField":
        return cls(grid, np.zeros((grid.n_frame,) + grid.shape))

    def at_centers(self) -> np.ndarray:
        """Frame components interpolated to cell centers."""
        grid = self.grid
        a = self.components[0]
        if grid.d == 2:
            half = grid.n_omega // 2
            origin = 0.5 * (a[0] - np.roll(a[0], -half))
        else:
            origin = np.zeros_like(a[0])
        inner = np.vstack([origin[None, :], a[:-1]])
        centers = [0.5 * (inner + a)]
        if grid.d == 2:
            b = self.components[1]
            centers.append(0.5 * (b + np.roll(b, 1, axis=1)))
        return np.stack(centers)


@dataclass(frozen=True, eq=False)
class TensorField(_FieldArithmetic):
    """Cell-centered frame components, shape (d, d, n_tau, n_omega)."""

    grid: ManifoldGrid
    components: np.ndarray

    def __post_init__(self) -> None:
        comps = np.asarray(self.components, dtype=float)
        expected = (self.grid.d, self.grid.d) + self.grid.shape
        if comps.shape != expected:
            raise FieldError(
                f"Tensor field shape {comps.shape} does not match {expected}",
                error_code="FIELD_SHAPE",
            )
        _check_finite(comps, "TensorField")
        object.__setattr__(self, "components", comps)

    def _data(self) -> np.ndarray:
        return self.components

    @classmethod
    def zeros(cls, grid: ManifoldGrid) -> "TensorField":
        return cls(grid, np.zeros((grid.d, grid.d) + grid.shape))

    @classmethod
    def scaled_metric(cls, f: ScalarField) -> "TensorField":
        """f times the metric identity tensor."""
        grid = f.grid
        comps = np.zeros((grid.d, grid.d) + grid.shape)
        for i in range(grid.d):
            comps[i, i] = f.values
        return cls(grid, comps)


@dataclass(frozen=True, eq=False)
class State:
    """The unknown column (u, theta) at time t."""

    __array_ufunc__ = None

    u: VectorField
    theta: ScalarField
    t: float = 0.0

    def __post_init__(self) -> None:
        _check_same_grid(self.u.grid, self.theta.grid)

    @property
    def grid(self) -> ManifoldGrid:
        return self.u.grid

    @classmethod
    def zeros(cls, grid: ManifoldGrid, t: float = 0.0) -> "State":
        return cls(VectorField.zeros(grid), ScalarField.zeros(grid), t)

    def with_time(self, t: float) -> "State":
        return State(self.u, self.theta, t)

    def __add__(self, other: "State") -> "State":
        return State(self.u + other.u, self.theta + other.theta, self.t)

    def __sub__(self, other: "State") -> "State":
        return State(self.u - other.u, self.theta - other.theta, self.t)

    def __mul__(self, scalar: float) -> "State":
        return State(self.u * scalar, self.theta * scalar, self.t)

    __rmul__ = __mul__

    def __neg__(self) -> "State":
        return self * -1.0


AnyField = Union[ScalarField, VectorField, TensorField]


# ---------------------------------------------------------------------------
# Sampling analytic profiles
# ---------------------------------------------------------------------------

Profile = Callable[[np.ndarray, np.ndarray], np.ndarray]


def sample_scalar(grid: ManifoldGrid, fn: Profile) -> ScalarField:
    """Evaluate fn(tau, phi) at cell centers."""
    tau, phi = np.meshgrid(grid.tau_nodes, grid.phi_nodes, indexing="ij")
    return ScalarField(grid, np.array(np.broadcast_to(fn(tau, phi), grid.shape)))


def sample_vector(grid: ManifoldGrid, a_tau: Profile,
                  a_phi: Union[Profile, None] = None) -> VectorField:
    """Evaluate frame components at their staggered positions."""
    tau, phi = np.meshgrid(grid.tau_faces, grid.phi_nodes, indexing="ij")
    comps = [np.array(np.broadcast_to(a_tau(tau, phi), grid.shape))]
    if grid.d == 2:
        tau_c, phi_f = np.meshgrid(grid.tau_nodes, grid.phi_faces, indexing="ij")
        if a_phi is None:
            comps.append(np.zeros(grid.shape))
        else:
            comps.append(np.array(np.broadcast_to(a_phi(tau_c, phi_f), grid.shape)))
    return VectorField(grid, np.stack(comps))


# ---------------------------------------------------------------------------
# Norms and inner products
# ---------------------------------------------------------------------------


def _pointwise_magnitude(f: AnyField) -> np.ndarray:
    if isinstance(f, ScalarField):
        return np.abs(f.values)
    if isinstance(f, VectorField):
        return np.sqrt(np.sum(f.at_centers() ** 2, axis=0))
    return np.sqrt(np.sum(f.components ** 2, axis=(0, 1)))


def lp_norm(f: AnyField, p: float) -> float:
    """
    Weighted discrete L^p norm, sup norm for p = inf.

    Vector magnitudes are Euclidean in frame components at cell centers,
    except p = 2 which uses the staggered energy quadrature so that the
    Leray projector is orthogonal and the vector semigroup contractive in it.
    """
    if not p >= 1:
        raise FieldError(f"Exponent p must be >= 1, got {p}", error_code="EXPONENT_INVALID",
                         details={"p": p})
    if isinstance(f, VectorField) and p == 2:
        return math.sqrt(float(np.sum(f.grid.face_weights * f.components ** 2)))
    mag = _pointwise_magnitude(f)
    if math.isinf(p):
        return float(np.max(mag))
    return float(np.sum(f.grid.weights * mag ** p) ** (1.0 / p))


def inner(a: Union[ScalarField, VectorField], b: Union[ScalarField, VectorField]) -> float:
    """Weighted L^2 inner product matching lp_norm(., 2)."""
    _check_same_grid(a.grid, b.grid)
    if isinstance(a, ScalarField) and isinstance(b, ScalarField):
        return float(np.sum(a.grid.weights * a.values * b.values))
    if isinstance(a, VectorField) and isinstance(b, VectorField):
        return float(np.sum(a.grid.face_weights * a.components * b.components))
    raise FieldError("Inner product needs two fields of the same kind")


def product_norm(s: State, p: float) -> float:
    """max{||u||_p, ||theta||_p}."""
    _check_same_grid(s.u.grid, s.theta.grid)
    return max(lp_norm(s.u, p), lp_norm(s.theta, p))


# ---------------------------------------------------------------------------
# Differential operators
# ---------------------------------------------------------------------------


def grad_scalar(f: ScalarField) -> VectorField:
    grid = f.grid
    flat = grid.grad_matrix @ f.values.ravel()
    return VectorField(grid, flat.reshape((grid.n_frame,) + grid.shape))


def div_vector(v: VectorField) -> ScalarField:
    grid = v.grid
    return ScalarField(grid, (grid.div_matrix @ v.components.ravel()).reshape(grid.shape))


def laplace_beltrami(f: ScalarField) -> ScalarField:
    """Delta_g f = div(grad f)."""
    return div_vector(grad_scalar(f))


def rot_vector(v: VectorField) -> np.ndarray:
    """Scalar curl at the vertices (d = 2); an empty array for radial d = 3 fields."""
    grid = v.grid
    flat = grid.rot_matrix @ v.components.ravel()
    return flat.reshape(grid.shape) if grid.d == 2 else flat


def rot_adjoint(psi: np.ndarray, grid: ManifoldGrid) -> VectorField:
    """Weighted adjoint of rot; its image is exactly divergence-free."""
    if grid.d != 2:
        raise GridError("rot* is only defined for d = 2 grids")
    flat = grid.rot_adjoint_matrix @ np.asarray(psi, dtype=float).ravel()
    return VectorField(grid, flat.reshape((grid.n_frame,) + grid.shape))


def bochner_laplacian(v: VectorField) -> VectorField:
    """
    Bochner Laplacian in orthonormal frame components.

    Assembled as grad div - rot* rot - (d-1), which is the rough Laplacian on
    H^d by the Weitzenboeck formula; radially it reads
    a'' + (d-1) coth a' - (d-1) coth^2 a.
    """
    grid = v.grid
    flat = grid.bochner_matrix @ v.components.ravel()
    return VectorField(grid, flat.reshape(v.components.shape))


def ebin_marsden(v: VectorField) -> VectorField:
    """L v = bochner_laplacian(v) - (d-1) v."""
    return bochner_laplacian(v) - (v.grid.d - 1) * v


def _ghost_rows(values: np.ndarray, grid: ManifoldGrid) -> np.ndarray:
    """Pad cell-centered tensor components with origin (parity) and tau_max (odd) ghosts."""
    if grid.d == 2:
        origin = np.roll(values[..., 0:1, :], -(grid.n_omega // 2), axis=-1)
    else:
        origin = values[..., 0:1, :]
    outer = -values[..., -1:, :]
    return np.concatenate([origin, values, outer], axis=-2)


def div_tensor(T: TensorField) -> VectorField:
    """
    Covariant divergence contracting the second index, (div T)^i = nabla_j T^{ij}.

    d = 2:
        (div T)_tau = d_tau T11 + (1/sinh) d_phi T12 + coth (T11 - T22)
        (div T)_phi = d_tau T21 + (1/sinh) d_phi T22 + coth (T21 + T12)
    d = 3 (radial-diagonal):
        (div T)_tau = d_tau T11 + coth (2 T11 - T22 - T33)
    """
    grid = T.grid
    c = T.components
    dtau = grid.dtau
    padded = _ghost_rows(c, grid)                 # rows -1 .. N
    here, above = padded[..., 1:-1, :], padded[..., 2:, :]
    coth_f = 1.0 / np.tanh(grid.tau_faces)[:, None]

    if grid.d == 3:
        t11 = here[0, 0]
        t11_up = above[0, 0]
        transverse = 0.5 * (here[1, 1] + here[2, 2] + above[1, 1] + above[2, 2])
        radial = (t11_up - t11) / dtau + coth_f * (
            (grid.d - 1) * 0.5 * (t11 + t11_up) - transverse
        )
        return VectorField(grid, radial[None])

    dphi = grid.dphi
    inv_sf = 1.0 / grid.sinh_faces[:, None]
    inv_sc = 1.0 / grid.sinh_nodes[:, None]
    coth_c = 1.0 / np.tanh(grid.tau_nodes)[:, None]

    def centered_phi(x: np.ndarray) -> np.ndarray:
        return (np.roll(x, -1, axis=-1) - np.roll(x, 1, axis=-1)) / (2.0 * dphi)

    radial = (
        (above[0, 0] - here[0, 0]) / dtau
        + inv_sf * 0.5 * (centered_phi(here[0, 1]) + centered_phi(above[0, 1]))
        + coth_f * 0.5 * (here[0, 0] + above[0, 0] - here[1, 1] - above[1, 1])
    )

    t21 = padded[1, 0]
    dtau_t21 = (t21[2:] - t21[:-2]) / (2.0 * dtau)
    mix = c[1, 0] + c[0, 1]
    angular = (
        0.5 * (dtau_t21 + np.roll(dtau_t21, -1, axis=1))
        + inv_sc * (np.roll(c[1, 1], -1, axis=1) - c[1, 1]) / dphi
        + coth_c * 0.5 * (mix + np.roll(mix, -1, axis=1))
    )
    return VectorField(grid, np.stack([radial, angular]))


def outer_product(u: VectorField, v: VectorField) -> TensorField:
    """u (x) v at cell centers; for radial d = 3 only the tau-tau entry is nonzero."""
    _check_same_grid(u.grid, v.grid)
    grid = u.grid
    uc, vc = u.at_centers(), v.at_centers()
    comps = np.zeros((grid.d, grid.d) + grid.shape)
    m = grid.n_frame
    comps[:m, :m] = uc[:, None] * vc[None, :]
    return TensorField(grid, comps)


def scale_vector(v: VectorField, f: ScalarField) -> VectorField:
    """Pointwise product f v with f interpolated to the faces."""
    _check_same_grid(v.grid, f.grid)
    grid = v.grid
    vals = f.values
    outer_ghost = np.vstack([vals[1:], -vals[-1:]])
    comps = [v.components[0] * 0.5 * (vals + outer_ghost)]
    if grid.d == 2:
        comps.append(v.components[1] * 0.5 * (vals + np.roll(vals, -1, axis=1)))
    return VectorField(grid, np.stack(comps))
