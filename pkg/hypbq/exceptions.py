"""
Custom exception hierarchy for hypbq numerical errors.

All exceptions inherit from HypBQError and include:
- message: Human-readable error message
- error_code: Machine-readable error code
- details: Additional context (dict)
"""

from typing import Any, Dict, Optional


class HypBQError(Exception):
    """
    Base exception for all hypbq errors.

    Attributes:
        message: Human-readable error message
        error_code: Machine-readable error code (e.g., "GRID_INVALID")
        details: Additional context as a dictionary
    """

    def __init__(
        self,
        message: str,
        error_code: str,
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.error_code = error_code
        self.details = details or {}
        super().__init__(self.message)

    def __str__(self) -> str:
        return f"[{self.error_code}] {self.message}"

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}("
            f"message='{self.message}', "
            f"error_code='{self.error_code}', "
            f"details={self.details})"
        )


class GridError(HypBQError):
    """
    Raised when a grid cannot be built or two fields live on different grids.

    Examples:
        - dimension outside {2, 3}
        - odd or too small angular resolution
        - d = 3 with more than one angular node
    """

    def __init__(
        self,
        message: str,
        error_code: str = "GRID_INVALID",
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message, error_code, details)


class FieldError(HypBQError):
    """Raised for malformed field data (shape, non-finite values, bad exponent)."""

    def __init__(
        self,
        message: str,
        error_code: str = "FIELD_INVALID",
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message, error_code, details)


class SemigroupError(HypBQError):
    """
    Raised when a semigroup cannot be applied or a bound is evaluated
    outside its range.

    Examples:
        - t <= 0 for a kernel or bound evaluation
        - p > q in gamma_pq
        - factorization failure of the Crank-Nicolson system
    """

    def __init__(
        self,
        message: str,
        error_code: str = "SEMIGROUP_ERROR",
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message, error_code, details)


class ProjectionError(HypBQError):
    """Raised when the Poisson system behind the Leray projector is singular."""

    def __init__(
        self,
        message: str,
        error_code: str = "PROJECTION_SINGULAR",
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message, error_code, details)


class DuhamelError(HypBQError):
    """Raised for mismatched trajectories or forcing handed to Duhamel operators."""

    def __init__(
        self,
        message: str,
        error_code: str = "DUHAMEL_MISMATCH",
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message, error_code, details)


class ConvergenceError(HypBQError):
    """
    Raised when a fixed-point solve does not converge and the caller
    requires a converged trajectory.
    """

    def __init__(
        self,
        message: str,
        error_code: str = "NOT_CONVERGED",
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message, error_code, details)


class StabilityError(HypBQError):
    """
    Raised when a cone-inequality quantity is not admissible.

    Examples:
        - nonpositive denominator in the delta bound
        - Volterra quadrature matrix with row-sum norm >= 1
        - exponents outside (0, 1)
    """

    def __init__(
        self,
        message: str,
        error_code: str = "STABILITY_ERROR",
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message, error_code, details)


class PeriodicSolveError(HypBQError):
    """Raised when the time-T iteration fails to contract."""

    def __init__(
        self,
        message: str,
        error_code: str = "PERIODIC_NOT_CONTRACTING",
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message, error_code, details)


class ConstantsError(HypBQError):
    """Raised when a closed-form constant is evaluated outside its hypotheses."""

    def __init__(
        self,
        message: str,
        error_code: str = "CONSTANT_OUT_OF_RANGE",
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message, error_code, details)


class ConfigurationError(HypBQError):
    """
    Raised when an experiment configuration cannot be read or validated.

    The details dictionary carries the offending dotted key under "key".
    """

    def __init__(
        self,
        message: str,
        error_code: str = "CONFIG_INVALID",
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message, error_code, details)


class ReportError(HypBQError):
    """Raised when a report fails schema validation or cannot be written."""

    def __init__(
        self,
        message: str,
        error_code: str = "REPORT_INVALID",
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message, error_code, details)
