"""
Analytic forcing profiles and initial data.

Spatial shapes are sampled once per grid; time enters only through the
scalar modulation, so a cosine-modulated forcing is exactly periodic.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from hypbq.exceptions import ConfigurationError
from hypbq.models.experiment import (
    ForcingConfig,
    InitialConfig,
    ProfileConfig,
    TensorProfileConfig,
    VectorProfileConfig,
)
from hypbq.services.geometry import (
    ManifoldGrid,
    ScalarField,
    State,
    TensorField,
    VectorField,
    lp_norm,
    sample_scalar,
    sample_vector,
)
from hypbq.services.projection import leray_project

_PERIOD_RTOL = 1e-9


def _bump(profile: ProfileConfig):  # type: ignore[no-untyped-def]
    def shape(tau: np.ndarray, phi: np.ndarray) -> np.ndarray:
        radial = profile.amplitude * np.exp(-((tau - profile.center_tau) / profile.width) ** 2)
        return radial * np.cos(profile.angular_mode * phi)
    return shape


def _zero(tau: np.ndarray, phi: np.ndarray) -> np.ndarray:
    return np.zeros_like(tau)


def scalar_profile(grid: ManifoldGrid, profile: ProfileConfig) -> ScalarField:
    return sample_scalar(grid, _bump(profile))


def vector_profile(grid: ManifoldGrid, profile: VectorProfileConfig) -> VectorField:
    if grid.d == 3 and (profile.direction != "radial" or profile.angular_mode):
        raise ConfigurationError("d = 3 supports radial mode-0 vector profiles only",
                                 details={"key": "direction"})
    if profile.direction == "radial":
        return sample_vector(grid, _bump(profile))
    return sample_vector(grid, _zero, _bump(profile))


def tensor_profile(grid: ManifoldGrid, profile: TensorProfileConfig) -> TensorField:
    bump = scalar_profile(grid, profile).values
    comps = np.zeros((grid.d, grid.d) + grid.shape)
    if profile.structure == "isotropic":
        for i in range(grid.d):
            comps[i, i] = bump
    elif profile.structure == "radial":
        comps[0, 0] = bump
    else:
        if grid.d != 2:
            raise ConfigurationError("Shear tensor profiles need d = 2",
                                     details={"key": "structure"})
        comps[0, 1] = bump
        comps[1, 0] = bump
    return TensorField(grid, comps)


def _commensurate(period: float, profile: ProfileConfig) -> bool:
    if not profile.amplitude or profile.modulation == "constant":
        return True
    ratio = period / profile.period
    return abs(ratio - round(ratio)) <= _PERIOD_RTOL * max(1.0, ratio) and round(ratio) >= 1


@dataclass(frozen=True, eq=False)
class ForcingSet:
    """
    Buoyancy direction h(t), stress F(t) and flux f(t).

    Each component is spatial_shape * modulation(t). When period is set,
    every cosine modulation period divides it, so x(t + T) = x(t) exactly.
    """

    grid: ManifoldGrid
    config: ForcingConfig
    period: Optional[float] = None
    _shapes: Dict[str, object] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.period is not None:
            for name in ("h", "F", "f"):
                if not _commensurate(self.period, getattr(self.config, name)):
                    raise ConfigurationError(
                        f"forcing.{name} modulation period does not divide T = {self.period}",
                        details={"key": f"forcing.{name}.period"},
                    )
        self._shapes["h"] = vector_profile(self.grid, self.config.h)
        self._shapes["F"] = tensor_profile(self.grid, self.config.F)
        self._shapes["f"] = vector_profile(self.grid, self.config.f)

    @classmethod
    def zero(cls, grid: ManifoldGrid) -> "ForcingSet":
        return cls(grid, ForcingConfig())

    def h(self, t: float) -> VectorField:
        return self._shapes["h"] * self.config.h.modulation_at(t)  # type: ignore[operator]

    def F(self, t: float) -> TensorField:
        return self._shapes["F"] * self.config.F.modulation_at(t)  # type: ignore[operator]

    def f(self, t: float) -> VectorField:
        return self._shapes["f"] * self.config.f.modulation_at(t)  # type: ignore[operator]

    @property
    def has_buoyancy(self) -> bool:
        return bool(self.config.h.amplitude)

    @property
    def has_source(self) -> bool:
        return bool(self.config.F.amplitude or self.config.f.amplitude)

    def h_norm(self, p: float) -> float:
        """sup_t ||h(t)||_{L^{p/2}}; modulations peak at 1."""
        return lp_norm(self._shapes["h"], p / 2.0)  # type: ignore[arg-type]

    def source_norm(self, p: float) -> float:
        """sup_t max(||F(t)||_{L^{p/2}}, ||f(t)||_{L^{p/2}})."""
        return max(lp_norm(self._shapes["F"], p / 2.0),   # type: ignore[arg-type]
                   lp_norm(self._shapes["f"], p / 2.0))   # type: ignore[arg-type]


def initial_state(grid: ManifoldGrid, config: InitialConfig) -> State:
    """(P u0, theta0) sampled from the configured profiles."""
    u0 = leray_project(vector_profile(grid, config.u0))
    return State(u0, scalar_profile(grid, config.theta0), 0.0)


def random_state(grid: ManifoldGrid, rng: np.random.Generator,
                 amplitude: float = 1.0) -> State:
    """Smooth random state: a few Gaussian bumps with random angular modes, u projected."""
    modes = (0,) if grid.d == 3 else (0, 1, 2)

    def random_bump() -> ProfileConfig:
        return ProfileConfig(
            center_tau=float(rng.uniform(0.8, 0.5 * grid.tau_max)),
            width=float(rng.uniform(0.3, 0.8)),
            amplitude=float(rng.normal()),
            angular_mode=int(rng.choice(modes)),
        )

    theta = scalar_profile(grid, random_bump())
    u = VectorField.zeros(grid)
    for direction in (("radial",) if grid.d == 3 else ("radial", "angular")):
        bump = random_bump()
        profile = VectorProfileConfig(direction=direction, **bump.model_dump(
            include={"center_tau", "width", "amplitude", "angular_mode"}))
        u = u + vector_profile(grid, profile)
    state = State(leray_project(u), theta, 0.0)
    scale = max(lp_norm(state.u, 2.0), lp_norm(state.theta, 2.0), 1e-300)
    return state * (amplitude / scale)


def random_sources(grid: ManifoldGrid, rng: np.random.Generator) -> Tuple[TensorField, VectorField]:
    """Random stress/flux pair with unit-scale amplitudes."""
    structures = ("isotropic", "radial") if grid.d == 3 else ("isotropic", "shear", "radial")
    center = float(rng.uniform(0.8, 0.5 * grid.tau_max))
    width = float(rng.uniform(0.3, 0.8))
    modes = (0,) if grid.d == 3 else (0, 1, 2)
    F = tensor_profile(grid, TensorProfileConfig(
        center_tau=center, width=width, amplitude=float(rng.normal()),
        angular_mode=int(rng.choice(modes)), structure=str(rng.choice(structures)),
    ))
    f = vector_profile(grid, VectorProfileConfig(
        center_tau=center, width=width, amplitude=float(rng.normal()),
    ))
    return F, f
