"""Shared fixtures: seeded generators and small-budget configurations."""

import numpy as np
import pytest

from app.models.schemas import (
    BirthModel,
    GridGeometry,
    NoiseModel,
    Region,
    RunConfig,
    ScenarioConfig,
    TmbConfig,
    UpdateConfig,
)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def noise() -> NoiseModel:
    return NoiseModel(sigma_n=1.0)


@pytest.fixture
def small_geometry() -> GridGeometry:
    return GridGeometry(width=16, height=16)


@pytest.fixture
def small_birth() -> BirthModel:
    return BirthModel(mu_b=0.02, roi=Region(x_min=0, x_max=16, y_min=0, y_max=16), n_birth_particles=2_000)


@pytest.fixture
def small_run_config(small_geometry: GridGeometry, small_birth: BirthModel) -> RunConfig:
    """16x16 grid, two objects, eight frames, small particle budgets."""
    scenario = ScenarioConfig(
        n_objects=2,
        n_steps=8,
        appear_before=2,
        disappear_after=6,
        birth_region=Region(x_min=4, x_max=12, y_min=4, y_max=12),
        geometry=small_geometry,
    )
    return RunConfig(
        scenario=scenario,
        birth=small_birth.model_copy(update={"n_birth_particles": 500}),
        update=UpdateConfig(n_bernoulli_particles=100, n_phd_particles_cap=2_000),
        tmb=TmbConfig(n_particles=100),
        n_runs=1,
        base_seed=7,
    )
