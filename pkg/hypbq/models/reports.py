"""
Structured results of verification, Picard, stability and periodic runs.

Everything here is serialized into report.json, so fields stay plain
floats, lists and dicts.
"""

from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field


class EstimateReport(BaseModel):
    """
    Outcome of one verification check.

    Attributes:
        name: Check identifier
        passed: Whether the measured value is within the threshold
        value: Measured quantity the threshold applies to
        threshold: Acceptance threshold (None for report-only checks)
        details: Auxiliary measurements (fitted constants, slopes, ...)
    """
    name: str = Field(..., description="Check identifier")
    passed: bool = Field(..., description="Check outcome")
    value: Optional[float] = Field(default=None, description="Measured value")
    threshold: Optional[float] = Field(default=None, description="Acceptance threshold")
    details: Dict[str, float] = Field(default_factory=dict)


class SmallnessCondition(BaseModel):
    name: str
    lhs: float
    rhs: float
    passed: bool
    margin: float = Field(..., description="rhs - lhs")


class SmallnessReport(BaseModel):
    conditions: List[SmallnessCondition] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def failed(self) -> List[str]:
        return [c.name for c in self.conditions if not c.passed]


class FittedConstants(BaseModel):
    """Measured discrete operator norms on a random suite."""
    C_fit: float = 0.0
    N_fit: float = 0.0
    M_fit: float = 0.0
    M_forcing_fit: float = 0.0
    n_samples: int = 0


class LinearBoundCheck(BaseModel):
    """sup_t ||x(t)|| against C||x0|| + N||h|| ||(0, eta)|| + M||(F, f)||."""
    measured: float
    bound: float
    holds: bool
    C: float
    N: float
    M: float


class IterationReport(BaseModel):
    """
    Picard iteration trace.

    Attributes:
        sup_norms: sup_t product norm of each iterate
        differences: sup_t product norm of v_{k+1} - v_k
        ratios: differences[k+1] / differences[k] where defined
        contraction_ratio: largest ratio measured above the round-off floor
    """
    sup_norms: List[float] = Field(default_factory=list)
    differences: List[float] = Field(default_factory=list)
    ratios: List[float] = Field(default_factory=list)
    contraction_ratio: Optional[float] = None
    ratio_stable: Optional[bool] = None
    converged: bool = False
    contraction_flagged: bool = False
    iterations: int = 0
    final_residual: Optional[float] = None
    rho: float = 0.0
    rho_effective: float = 0.0
    h_norm: float = 0.0
    M_fit: Optional[float] = None
    N_fit: Optional[float] = None
    fitted_ratio_bound: Optional[float] = None
    formula_ratio_bound: Optional[float] = None
    max_divergence_ratio: Optional[float] = None
    smallness: Optional[SmallnessReport] = None


class DecayReport(BaseModel):
    """Perturbation decay phi(t) = ||x(t) - x~(t)|| and its exponential fit."""
    times: List[float] = Field(default_factory=list)
    phi: List[float] = Field(default_factory=list)
    delta_measured: Optional[float] = None
    prefactor: Optional[float] = None
    C_fit: Optional[float] = None
    r_squared: Optional[float] = None
    fit_window: List[float] = Field(default_factory=list)
    envelope_holds: bool = True
    monotone_after_transient: bool = True
    gamma: Optional[float] = None
    delta_bound: Optional[float] = None
    C_delta_with_C: Optional[float] = None
    C_delta_with_M: Optional[float] = None
    norm_A: Optional[float] = None
    norm_D: Optional[float] = None
    theory_violation: Optional[str] = None
    passed: bool = True


class CauchyReport(BaseModel):
    pairwise: List[List[float]] = Field(default_factory=list)
    differences: List[float] = Field(default_factory=list)
    ratios: List[float] = Field(default_factory=list)
    fitted_ratio: Optional[float] = None
    contracting: bool = True
    extrapolated: bool = False


class PeriodicReport(BaseModel):
    period: float
    windows: int = 0
    differences: List[float] = Field(default_factory=list)
    ratios: List[float] = Field(default_factory=list)
    converged: bool = False
    strictly_decreasing: bool = True
    periodicity_defect: Optional[float] = None
    relative_defect: Optional[float] = None
    orbit_residual: Optional[float] = None
    ratio_bound: Optional[float] = None
    ratio_bound_holds: Optional[bool] = None
    cauchy: Optional[CauchyReport] = None
    smallness: Optional[SmallnessReport] = None


class ConstantsReport(BaseModel):
    """Every closed-form constant for one (d, p, delta_d, C, rho, ||h||)."""
    d: int
    p: float
    delta_d: float
    C: float
    rho: float
    h_norm: float
    beta: float
    beta_tilde: float
    theta_existence: float
    theta_tilde_existence: float
    N: float
    M_forcing: float
    M_bilinear: float
    near_critical: bool
    gamma: float
    theta: float
    theta_tilde: float
    C_tilde: float
    norm_A: Optional[float] = None
    delta_bound: Optional[float] = None
    delta: Optional[float] = None
    norm_D: Optional[float] = None
    C_delta_with_C: Optional[float] = None
    C_delta_with_M: Optional[float] = None
    stability_violation: Optional[str] = None


class Series(BaseModel):
    """One CSV file: header row plus data rows."""
    columns: List[str]
    rows: List[List[Union[float, int, str, None]]] = Field(default_factory=list)


class RunOutcome(BaseModel):
    """
    Result of one CLI subcommand before it is written to disk.

    Attributes:
        command: Subcommand name
        passed: Whether every acceptance check of the run held
        checks: Individual acceptance checks feeding `passed`
        results: Structured reports, already JSON-compatible
        series: CSV payloads keyed by file stem
    """
    command: str
    passed: bool
    checks: Dict[str, bool] = Field(default_factory=dict)
    results: Dict[str, Any] = Field(default_factory=dict)
    series: Dict[str, Series] = Field(default_factory=dict)
