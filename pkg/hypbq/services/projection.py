"""
Leray projection P = I + grad (-Delta_g)^{-1} div.

grad is the negative weighted adjoint of div, so P is the orthogonal
projector onto discretely divergence-free fields in the energy inner
product.
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from hypbq.exceptions import ProjectionError
from hypbq.services.geometry import (
    ManifoldGrid,
    ScalarField,
    VectorField,
    div_vector,
    grad_scalar,
)
from hypbq.utils.logging import get_logger

logger = get_logger(__name__)

RESIDUAL_TOLERANCE = 1e-8


def _poisson_factor(grid: ManifoldGrid):  # type: ignore[no-untyped-def]
    lu = grid.cache.get("poisson")
    if lu is None:
        operator = sp.csc_matrix(-grid.laplacian_matrix)
        try:
            lu = splu(operator)
        except RuntimeError as exc:
            raise ProjectionError(
                f"Dirichlet Laplacian is singular: {exc}",
                details={"n_tau": grid.n_tau, "n_omega": grid.n_omega},
            ) from exc
        grid.cache["poisson"] = lu
        logger.debug("Factorized Dirichlet Laplacian", extra={"unknowns": grid.size})
    return lu


def poisson_solve(rhs: ScalarField) -> ScalarField:
    """
    Solve -Delta_g phi = rhs with phi = 0 at tau_max.

    Raises:
        ProjectionError: if the factorization fails or the residual is not
            at round-off level
    """
    grid = rhs.grid
    b = rhs.values.ravel()
    if not np.any(b):
        return ScalarField.zeros(grid)
    phi = _poisson_factor(grid).solve(b)
    residual = np.linalg.norm(-grid.laplacian_matrix @ phi - b)
    if residual > RESIDUAL_TOLERANCE * np.linalg.norm(b):
        raise ProjectionError(
            "Poisson residual above round-off level",
            error_code="PROJECTION_RESIDUAL",
            details={"residual": float(residual), "rhs_norm": float(np.linalg.norm(b))},
        )
    return ScalarField(grid, phi.reshape(grid.shape))


def leray_project(v: VectorField) -> VectorField:
    """P v = v + grad(poisson_solve(div v))."""
    if not np.any(v.components):
        return v
    return v + grad_scalar(poisson_solve(div_vector(v)))
