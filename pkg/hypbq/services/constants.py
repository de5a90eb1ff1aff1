"""
Closed-form constants of the existence, contraction and stability theorems.

Picard, stability and periodic code read every constant from here. Two
families of exponents coexist: the existence bounds use theta = d/p and
theta_tilde = (d/2)(1/p + 1/d), the stability bounds use theta = 2/p and
theta_tilde = 1/p + 1/d.
"""

import math
from typing import Tuple

from hypbq.exceptions import ConstantsError, HypBQError
from hypbq.models.reports import ConstantsReport
from hypbq.services.semigroup import gamma_pq
from hypbq.utils.logging import get_logger

logger = get_logger(__name__)

# Lanczos approximation, g = 7, n = 9
_LANCZOS_G = 7
_LANCZOS_BASE = 0.99999999999980993
_LANCZOS_COEFFS = (
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

NEAR_CRITICAL_GAP = 0.05


def gamma_fn(x: float) -> float:
    """
    Gamma function for positive reals (Lanczos, about 15 significant digits).

    Raises:
        ConstantsError: if x <= 0
    """
    if not x > 0:
        raise ConstantsError(
            f"Gamma is only evaluated for positive arguments, got {x}",
            details={"x": x},
        )
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1.0 - x))

    z = x - 1.0
    series = _LANCZOS_BASE
    for i, coeff in enumerate(_LANCZOS_COEFFS):
        series += coeff / (z + i + 1)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2 * math.pi) * t ** (z + 0.5) * math.exp(-t) * series


def _check_supercritical(p: float, d: int) -> None:
    if d not in (2, 3):
        raise ConstantsError(f"Dimension must be 2 or 3, got {d}", details={"d": d})
    if not p > d:
        raise ConstantsError(
            f"Lebesgue exponent must exceed the dimension (p={p}, d={d})",
            error_code="EXPONENT_NOT_SUPERCRITICAL",
            details={"p": p, "d": d},
        )


def beta_rates(p: float, delta_d: float) -> Tuple[float, float]:
    """Rates (beta, beta_tilde) = (gamma_{p/3,p}, (gamma_{p,p} + gamma_{p/2,p})/2)."""
    if p / 3.0 < 1.0:
        raise ConstantsError(
            f"p/3 must be at least 1 for the L^(p/3) bound, got p={p}",
            error_code="EXPONENT_TOO_SMALL",
            details={"p": p},
        )
    beta = gamma_pq(p / 3.0, p, delta_d)
    beta_tilde = 0.5 * (gamma_pq(p, p, delta_d) + gamma_pq(p / 2.0, p, delta_d))
    return beta, beta_tilde


def _gamma_integral(rate: float, exponent: float) -> float:
    # sup_t of int_0^t (1 + s^{-exponent}) e^{-rate s} ds
    return rate ** (exponent - 1.0) * gamma_fn(1.0 - exponent) + 1.0 / rate


def bound_N(C: float, p: float, beta: float, d: int) -> float:
    """
    Coupling constant N = C^{2/p} (beta^{theta-1} Gamma(1-theta) + 1/beta),
    theta = d/p.

    Example:
        >>> round(bound_N(1.0, 4.0, 0.5, 2), 4)
        4.5066
    """
    _check_supercritical(p, d)
    if not beta > 0:
        raise ConstantsError(f"Rate beta must be positive, got {beta}",
                             details={"beta": beta})
    theta = d / p
    return C ** (2.0 / p) * _gamma_integral(beta, theta)


def bound_M(C: float, p: float, d: int, beta_tilde: float) -> float:
    """
    Forcing/bilinear constant M = C^{1/p+1/d} (bt^{tt-1} Gamma(1-tt) + 1/bt),
    tt = (d/2)(1/p + 1/d), bt = beta_tilde.

    Near-critical exponents (p - d < 0.05) are logged; M blows up there.
    """
    _check_supercritical(p, d)
    if not beta_tilde > 0:
        raise ConstantsError(f"Rate beta_tilde must be positive, got {beta_tilde}",
                             details={"beta_tilde": beta_tilde})
    if p - d < NEAR_CRITICAL_GAP:
        logger.warning(
            "Near-critical exponent, M is close to the Gamma pole",
            extra={"p": p, "d": d},
        )
    theta_tilde = 0.5 * d * (1.0 / p + 1.0 / d)
    return C ** (1.0 / p + 1.0 / d) * _gamma_integral(beta_tilde, theta_tilde)


def stability_exponents(p: float, d: int) -> Tuple[float, float]:
    """(theta, theta_tilde) = (2/p, 1/p + 1/d) used by the cone inequality."""
    _check_supercritical(p, d)
    return 2.0 / p, 1.0 / p + 1.0 / d


def stability_gamma(p: float, d: int, delta_d: float) -> float:
    """gamma = min{gamma_{p,p}, gamma_{p/3,p}, (gamma_{p,p} + gamma_{p/2,p})/2}."""
    _check_supercritical(p, d)
    beta, beta_tilde = beta_rates(p, delta_d)
    return min(gamma_pq(p, p, delta_d), beta, beta_tilde)


def c_tilde(C: float, p: float, d: int) -> float:
    """C_tilde = max{C^{2/p}, C^{1/p+1/d}}."""
    return max(C ** (2.0 / p), C ** (1.0 / p + 1.0 / d))


def cone_norm_bound(
    rate: float,
    rho: float,
    C_tilde: float,
    h_norm: float,
    theta: float,
    theta_tilde: float,
    tail: float,
) -> float:
    """
    Shared closed form of the cone-operator bounds:

        2 rho Ct (rate^{tt-1} Gamma(1-tt) + tail) + Ct |h| (rate^{th-1} Gamma(1-th) + tail)

    ||A|| uses rate = gamma, tail = 1/gamma; ||D|| uses rate = gamma - delta,
    tail = 2/gamma.
    """
    for name, value in (("theta", theta), ("theta_tilde", theta_tilde)):
        if not 0.0 < value < 1.0:
            raise ConstantsError(
                f"Exponent {name} must lie in (0, 1), got {value}",
                error_code="EXPONENT_OUT_OF_RANGE",
                details={name: value},
            )
    if not rate > 0:
        raise ConstantsError(f"Rate must be positive, got {rate}",
                             details={"rate": rate})
    bilinear = 2.0 * rho * C_tilde * (
        rate ** (theta_tilde - 1.0) * gamma_fn(1.0 - theta_tilde) + tail
    )
    coupling = C_tilde * h_norm * (
        rate ** (theta - 1.0) * gamma_fn(1.0 - theta) + tail
    )
    return bilinear + coupling


def c_delta(
    M_pref: float,
    rho: float,
    C_tilde: float,
    gamma: float,
    delta: float,
    h_norm: float,
    theta: float,
    theta_tilde: float,
) -> float:
    """
    Stability prefactor C_delta = M_pref / (1 - ||D||).

    Raises:
        ConstantsError: if delta >= gamma or the denominator is not positive
    """
    if not delta < gamma:
        raise ConstantsError(
            f"delta must be below gamma (delta={delta}, gamma={gamma})",
            error_code="DELTA_TOO_LARGE",
            details={"delta": delta, "gamma": gamma},
        )
    d_norm = cone_norm_bound(
        gamma - delta, rho, C_tilde, h_norm, theta, theta_tilde, 2.0 / gamma
    )
    denominator = 1.0 - d_norm
    if not denominator > 0:
        raise ConstantsError(
            "C_delta denominator is not positive; delta too large or data too big",
            error_code="C_DELTA_DENOMINATOR",
            details={"denominator": denominator, "delta": delta},
        )
    return M_pref / denominator


def evaluate_constants(
    d: int,
    p: float,
    delta_d: float,
    C: float,
    rho: float = 0.0,
    h_norm: float = 0.0,
    delta_fraction: float = 0.5,
) -> ConstantsReport:
    """
    Evaluate every theorem constant for one parameter set.

    The stability block (delta bound, C_delta, cone norms) is filled only
    when the smallness hypotheses of the cone inequality hold; otherwise
    the report carries the violation message.
    """
    # local import: stability builds on these closed forms
    from hypbq.services.stability import cone_operator_norm, delta_bound

    _check_supercritical(p, d)
    beta, beta_tilde = beta_rates(p, delta_d)
    N = bound_N(C, p, beta, d)
    M = bound_M(C, p, d, beta_tilde)
    gamma = stability_gamma(p, d, delta_d)
    theta, theta_tilde = stability_exponents(p, d)
    Ct = c_tilde(C, p, d)

    report = ConstantsReport(
        d=d, p=p, delta_d=delta_d, C=C, rho=rho, h_norm=h_norm,
        beta=beta, beta_tilde=beta_tilde,
        theta_existence=d / p, theta_tilde_existence=0.5 * d * (1.0 / p + 1.0 / d),
        N=N, M_forcing=M, M_bilinear=M,
        near_critical=p - d < NEAR_CRITICAL_GAP,
        gamma=gamma, theta=theta, theta_tilde=theta_tilde, C_tilde=Ct,
    )
    try:
        report.norm_A = cone_operator_norm(
            "A", gamma, 0.0, rho, Ct, h_norm, (theta, theta_tilde)
        )
        bound = delta_bound(gamma, rho, Ct, theta, theta_tilde, h_norm)
        delta = delta_fraction * bound
        report.delta_bound = bound
        report.delta = delta
        report.norm_D = cone_operator_norm(
            "D", gamma, delta, rho, Ct, h_norm, (theta, theta_tilde)
        )
        report.C_delta_with_C = c_delta(C, rho, Ct, gamma, delta, h_norm,
                                        theta, theta_tilde)
        report.C_delta_with_M = c_delta(M, rho, Ct, gamma, delta, h_norm,
                                        theta, theta_tilde)
    except HypBQError as exc:
        report.stability_violation = str(exc)
        logger.warning("Stability constants not admissible",
                       extra={"reason": str(exc)})
    return report
