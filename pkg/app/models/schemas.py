"""
Pydantic schemas.

Configuration models for every tracker component, the experiment RunConfig,
and request/response models for the HTTP API. Unknown keys are rejected
everywhere so a typo in a threshold name fails loudly instead of silently
falling back to a default.
"""

import math
from enum import Enum
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class _Config(BaseModel):
    """Base for configuration models: frozen, extra keys forbidden."""

    model_config = ConfigDict(extra="forbid", frozen=True)


# ============================================
# Geometry and sensor
# ============================================

class Region(_Config):
    """Axis-aligned rectangle [x_min, x_max] × [y_min, y_max] in meters."""

    x_min: float = 0.0
    x_max: float = 64.0
    y_min: float = 0.0
    y_max: float = 64.0

    @model_validator(mode="after")
    def _check_bounds(self) -> "Region":
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"Empty region: {self}")
        return self

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def contains_region(self, other: "Region") -> bool:
        return (
            self.x_min <= other.x_min and other.x_max <= self.x_max
            and self.y_min <= other.y_min and other.y_max <= self.y_max
        )


class GridGeometry(_Config):
    """Pixel grid of the sensor. Cells are indexed row-major from the origin."""

    width: int = Field(64, ge=1)
    height: int = Field(64, ge=1)
    cell_size: float = Field(1.0, gt=0)
    origin: tuple[float, float] = (0.0, 0.0)

    @property
    def n_cells(self) -> int:
        """M, the number of measurement cells."""
        return self.width * self.height

    @property
    def roi(self) -> Region:
        ox, oy = self.origin
        return Region(
            x_min=ox,
            x_max=ox + self.width * self.cell_size,
            y_min=oy,
            y_max=oy + self.height * self.cell_size,
        )


class NoiseModel(_Config):
    """Background Rayleigh noise."""

    sigma_n: float = Field(1.0, gt=0)


# ============================================
# Filter configuration
# ============================================

class DynamicsConfig(_Config):
    """Nearly-constant-velocity motion plus intensity random walk."""

    p_s: float = Field(0.999, ge=0, le=1)
    q_pos: float = Field(1e-3, ge=0)
    q_int: float = Field(1e-4, ge=0)
    dt: float = Field(1.0, gt=0)


class BirthModel(_Config):
    """Poisson birth intensity λ_B = μ_B f_B."""

    mu_b: float = Field(4 / 64**2, ge=0)
    roi: Region = Region()
    sigma_v2: float = Field(1e-2, ge=0)
    eta_i: float = Field(30.0, gt=0)
    n_birth_particles: int = Field(50_000, ge=1)


class AssociationConfig(_Config):
    """Weight construction and sum-product settings."""

    max_iters: int = Field(200, ge=1)
    tol: float = Field(1e-6, gt=0)
    damping: Optional[float] = Field(0.5, gt=0, lt=1)
    min_new_existence: float = Field(1e-6, ge=0, lt=1)
    # "psf": particle terms weighted by d(x) as printed in the update equations.
    # "normalized": weighted by d(x)/Σ_m d(x), i.e. the occupied-cell indicator.
    contribution: Literal["normalized", "psf"] = "normalized"


class UpdateConfig(_Config):
    """MB approximation, recycling and particle budgets."""

    eta_r: float = Field(0.1, gt=0, lt=1)
    n_bernoulli_particles: int = Field(3_000, ge=1)
    n_phd_particles_cap: int = Field(50_000, ge=1)
    estimate_threshold: float = Field(0.5, gt=0, lt=1)


class TmbConfig(_Config):
    """Baseline multi-Bernoulli TBD filter."""

    # None: resolved to 1.5·sqrt(γ_I + σ_n²) from the scenario
    eta_new: Optional[float] = Field(None, gt=0)
    r_birth: float = Field(1e-4, gt=0, le=1)
    eta_t: float = Field(1e-4, gt=0, lt=1)
    p_s: float = Field(0.999, ge=0, le=1)
    n_particles: int = Field(3_000, ge=1)
    max_components: int = Field(500, ge=1)
    birth_gate: float = Field(0.5, gt=0)

    def resolved(self, gamma_i: float, noise: NoiseModel) -> "TmbConfig":
        """Copy with eta_new filled in from the expected object intensity."""
        if self.eta_new is not None:
            return self
        return self.model_copy(update={"eta_new": birth_threshold(gamma_i, noise)})


def birth_threshold(gamma_i: float, noise: NoiseModel) -> float:
    """Measurement threshold above which T-MB spawns a component."""
    return 1.5 * math.sqrt(gamma_i + noise.sigma_n**2)


# ============================================
# Scenario and experiment
# ============================================

class ScenarioConfig(_Config):
    """Ground-truth scenario."""

    n_objects: int = Field(10, ge=0)
    n_steps: int = Field(200, ge=1)
    appear_before: int = Field(30, ge=1)
    disappear_after: int = Field(170, ge=1)
    birth_region: Region = Region(x_min=17, x_max=48, y_min=17, y_max=48)
    gamma_init: float = Field(10.0, ge=0)
    init_velocity_var: float = Field(1e-2, ge=0)
    geometry: GridGeometry = GridGeometry()
    dynamics: DynamicsConfig = DynamicsConfig()
    noise: NoiseModel = NoiseModel()
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_windows(self) -> "ScenarioConfig":
        if not self.roi.contains_region(self.birth_region):
            raise ValueError("birth_region must lie inside the ROI")
        if not (1 <= self.appear_before < self.disappear_after <= self.n_steps):
            raise ValueError(
                "Require 1 <= appear_before < disappear_after <= n_steps, got "
                f"{self.appear_before}, {self.disappear_after}, {self.n_steps}"
            )
        return self

    @property
    def roi(self) -> Region:
        return self.geometry.roi


class OspaParams(_Config):
    """OSPA cutoff c (meters) and order p."""

    c: float = Field(20.0, gt=0)
    p: float = Field(2.0, ge=1)


class FilterKind(str, Enum):
    TTOMBP = "ttombp"
    TMB = "tmb"


class RunConfig(_Config):
    """Everything one Monte Carlo experiment depends on."""

    scenario: ScenarioConfig = ScenarioConfig()
    filter: FilterKind = FilterKind.TTOMBP
    dynamics: DynamicsConfig = DynamicsConfig()
    birth: BirthModel = BirthModel()
    association: AssociationConfig = AssociationConfig()
    update: UpdateConfig = UpdateConfig()
    tmb: TmbConfig = TmbConfig()
    ospa: OspaParams = OspaParams()
    n_runs: int = Field(50, ge=1)
    base_seed: int = Field(0, ge=0)
    output_dir: str = "results/experiment"

    def resolved_tmb(self) -> TmbConfig:
        return self.tmb.resolved(self.scenario.gamma_init, self.scenario.noise)


# ============================================
# API request / response models
# ============================================

class OspaRequest(BaseModel):
    """Two position sets to compare."""

    estimates: list[tuple[float, float]] = Field(default_factory=list)
    truth: list[tuple[float, float]] = Field(default_factory=list)
    c: float = Field(20.0, gt=0)
    p: float = Field(2.0, ge=1)


class OspaResponse(BaseModel):
    ospa: float
    localization: float
    cardinality: float


class ExperimentRequest(BaseModel):
    """Experiment submission: a name for the output directory plus its config."""

    name: str = Field(..., pattern=r"^[A-Za-z0-9_-]+$")
    config: RunConfig = RunConfig()


class ExperimentAccepted(BaseModel):
    name: str
    output_dir: str
    n_runs: int
    filter: FilterKind


class MospaRow(BaseModel):
    """One row of the aggregated MOSPA curve."""

    k: int
    mospa_mean: float
    mospa_stderr: float
    n_runs: int
