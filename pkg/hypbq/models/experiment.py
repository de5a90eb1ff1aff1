"""
Experiment configuration models.

An experiment file is TOML with one table per section; every section is a
pydantic model with extra="forbid" so misspelled keys fail loudly.
"""

import math
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ManifoldConfig(_Section):
    """Grid parameters of the truncated H^d."""

    d: int = Field(default=2, description="Dimension (2 or 3)")
    tau_max: float = Field(default=6.0, gt=0, description="Geodesic truncation radius")
    n_tau: int = Field(default=64, ge=8, description="Radial cells")
    n_omega: int = Field(default=32, ge=1, description="Angular nodes (1 for d = 3)")
    cell_volumes: Literal["midpoint", "exact"] = Field(
        default="midpoint", description="Cell weight rule of the grid quadrature"
    )

    @field_validator("d")
    @classmethod
    def _dimension(cls, v: int) -> int:
        if v not in (2, 3):
            raise ValueError("d must be 2 or 3")
        return v

    @model_validator(mode="after")
    def _angular_resolution(self) -> "ManifoldConfig":
        if self.d == 3 and self.n_omega != 1:
            raise ValueError("d = 3 is radial-only, n_omega must be 1")
        if self.d == 2 and (self.n_omega < 4 or self.n_omega % 2):
            raise ValueError("d = 2 needs an even n_omega >= 4")
        return self


class SemigroupConfig(_Section):
    """Constants of the dispersive estimates and the time-stepping scheme."""

    C: float = Field(default=1.0, ge=1.0, description="Dispersive prefactor")
    delta_d: Optional[float] = Field(
        default=None, gt=0,
        description="Spectral constant; defaults to (d-1)^2/4 when omitted"
    )
    cn_steps_per_unit_time: int = Field(default=64, ge=16,
                                        description="Substeps per unit time")
    theta_scheme: float = Field(default=0.5, ge=0.5, le=1.0,
                                description="Implicitness (0.5 = Crank-Nicolson)")

    def spectral_constant(self, d: int) -> float:
        """delta_d, falling back to the L^2 spectral gap (d-1)^2/4."""
        return self.delta_d if self.delta_d is not None else (d - 1) ** 2 / 4.0


class SolverConfig(_Section):
    """Picard iteration on the ball B_rho."""

    p: float = Field(default=4.0, description="Lebesgue exponent (> d)")
    rho: float = Field(default=0.1, gt=0, description="Ball radius")
    picard_tol: float = Field(default=1e-8, gt=0)
    max_iters: int = Field(default=50, ge=1)
    t_max: float = Field(default=10.0, gt=0, description="Time horizon")
    dt: float = Field(default=1.0 / 64.0, gt=0, description="Trajectory time step")
    endpoint_rule: Literal["exponential", "graded", "trapezoid"] = Field(
        default="exponential", description="Quadrature of each Duhamel subinterval"
    )
    max_workers: int = Field(default=1, ge=1,
                             description="Threads for per-node integrand evaluation")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_max / self.dt)))


class ProfileConfig(_Section):
    """
    Gaussian bump A exp(-((tau - c)/w)^2) cos(m phi) with a time modulation.

    amplitude = 0 switches the profile off.
    """

    kind: Literal["gaussian_bump"] = "gaussian_bump"
    center_tau: float = Field(default=1.5, ge=0)
    width: float = Field(default=0.5, gt=0)
    amplitude: float = 0.0
    angular_mode: int = Field(default=0, ge=0)
    modulation: Literal["constant", "cosine"] = "constant"
    period: float = Field(default=1.0, gt=0)
    phase: float = 0.0

    def modulation_at(self, t: float) -> float:
        if self.modulation == "constant":
            return 1.0
        return math.cos(2.0 * math.pi * t / self.period + self.phase)


class VectorProfileConfig(ProfileConfig):
    direction: Literal["radial", "angular"] = "radial"


class TensorProfileConfig(ProfileConfig):
    structure: Literal["isotropic", "shear", "radial"] = "shear"


class ForcingConfig(_Section):
    """Buoyancy direction h, external stress F and reference-temperature flux f."""

    h: VectorProfileConfig = Field(default_factory=VectorProfileConfig)
    F: TensorProfileConfig = Field(default_factory=TensorProfileConfig)
    f: VectorProfileConfig = Field(default_factory=VectorProfileConfig)


class InitialConfig(_Section):
    u0: VectorProfileConfig = Field(
        default_factory=lambda: VectorProfileConfig(direction="angular")
    )
    theta0: ProfileConfig = Field(default_factory=ProfileConfig)


class ExperimentSection(_Section):
    seed: int = 0
    output_dir: Optional[str] = None
    period: Optional[float] = Field(default=None, gt=0,
                                    description="Forcing period T for `periodic`")
    periodic_tol: float = Field(default=1e-5, gt=0)
    max_windows: int = Field(default=60, ge=3)
    perturbation_scale: float = Field(default=1e-3, ge=0,
                                      description="Size of the initial perturbation")
    n_samples: int = Field(default=20, ge=1, description="Random suite size")
    fit_window_start: float = Field(default=1.0, ge=0)
    decay_horizon: Optional[float] = Field(
        default=None, gt=0,
        description="Horizon of the decay run that measures delta for `periodic`",
    )
    delta_fraction: float = Field(default=0.5, gt=0, lt=1,
                                  description="Fraction of the delta bound used for C_delta")


class ExperimentConfig(_Section):
    """Complete experiment description."""

    manifold: ManifoldConfig = Field(default_factory=ManifoldConfig)
    semigroup: SemigroupConfig = Field(default_factory=SemigroupConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    forcing: ForcingConfig = Field(default_factory=ForcingConfig)
    initial: InitialConfig = Field(default_factory=InitialConfig)
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)

    @model_validator(mode="after")
    def _cross_section(self) -> "ExperimentConfig":
        d = self.manifold.d
        if not self.solver.p > d:
            raise ValueError(f"solver.p must exceed manifold.d = {d}")
        if d == 3:
            for name, profile in (("forcing.h", self.forcing.h),
                                  ("forcing.f", self.forcing.f),
                                  ("initial.u0", self.initial.u0)):
                if profile.amplitude and (profile.direction != "radial"
                                          or profile.angular_mode):
                    raise ValueError(f"{name} must be a radial mode-0 profile for d = 3")
            if self.forcing.F.amplitude and self.forcing.F.structure == "shear":
                raise ValueError("forcing.F shear structure needs d = 2")
        return self
