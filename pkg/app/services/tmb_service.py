"""
Baseline multi-Bernoulli track-before-detect filter.

Each Bernoulli component is updated independently with the image likelihood
ratio (no data association). New components are spawned from cells of the
previous frame whose value exceeds eta_new, and components whose existence
drops below eta_t are pruned.
"""

import logging
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from app.models.rfs import GAMMA, P1, P2, STATE_DIM, V1, BernoulliComponent, ParticleSet, PmbState
from app.models.schemas import BirthModel, DynamicsConfig, GridGeometry, NoiseModel, TmbConfig
from app.services.dynamics_service import predict_bernoulli, propagate_states
from app.services.measurement_service import (
    OUTSIDE,
    IntensityImage,
    clamped_intensity,
    log_f0,
    log_f1,
    state_cells,
)
from app.services.particle_service import normalize, resample

logger = logging.getLogger("tbdtrack.tmb")


def log_likelihood_ratio(
    states: np.ndarray,
    image: IntensityImage,
    noise: NoiseModel,
    geom: GridGeometry,
) -> np.ndarray:
    """log g_i = log f1(z|x_i) − log f0(z) on the occupied cell; 0 outside the ROI."""
    cells = state_cells(geom, states)
    log_g = np.zeros(states.shape[0])
    inside = cells != OUTSIDE
    if np.any(inside):
        z = image.cells[cells[inside]]
        with np.errstate(invalid="ignore"):
            ratio = log_f1(z, clamped_intensity(states[inside]), noise) - log_f0(z, noise)
        # z = 0 makes both terms -inf; the densities agree there in the limit
        log_g[inside] = np.where(np.isnan(ratio), 0.0, ratio)
    return log_g


def existence_update(r: float, log_l: float) -> float:
    """Bernoulli Bayes update r' = r·L / (1 − r + r·L), evaluated stably in log L."""
    if r <= 0:
        return 0.0
    if r >= 1:
        return 1.0
    return float(r / (r + (1.0 - r) * np.exp(-log_l)))


def tmb_update_component(
    b: BernoulliComponent,
    image: IntensityImage,
    noise: NoiseModel,
    geom: GridGeometry,
    cfg: TmbConfig,
    rng: np.random.Generator,
) -> Optional[BernoulliComponent]:
    """
    Independent Bernoulli update against the full image.

    Returns None when the likelihood L = Σ w_i·g_i vanishes (no particle can
    have produced the image); the component is removed.
    """
    if len(b.spatial) == 0 or b.r <= 0:
        return None
    log_g = log_likelihood_ratio(b.spatial.states, image, noise, geom)
    with np.errstate(divide="ignore"):
        log_wg = np.log(b.spatial.weights) + log_g
    log_l = float(logsumexp(log_wg))
    if not np.isfinite(log_l):
        return None
    weights = np.exp(log_wg - log_l)
    spatial = normalize(resample(ParticleSet(b.spatial.states, weights), cfg.n_particles, rng))
    return BernoulliComponent(r=existence_update(b.r, log_l), spatial=spatial, track_id=b.track_id)


def birth_cells(prev_image: IntensityImage, cfg: TmbConfig) -> np.ndarray:
    """Cells of the previous frame brighter than eta_new."""
    if cfg.eta_new is None:
        raise ValueError("TmbConfig.eta_new must be resolved before use")
    return np.flatnonzero(prev_image.cells > cfg.eta_new)


def _claimed_mass(bernoullis: tuple[BernoulliComponent, ...], geom: GridGeometry) -> np.ndarray:
    """
    Σ_j P_j(cell): spatial mass the existing components put on each cell,
    whatever their existence. Newborns at r_birth count fully.
    """
    claimed = np.zeros(geom.n_cells)
    for b in bernoullis:
        cells = state_cells(geom, b.spatial.states)
        inside = cells != OUTSIDE
        claimed += np.bincount(cells[inside], weights=b.spatial.weights[inside], minlength=geom.n_cells)
    return claimed


def tmb_birth(
    prev_image: IntensityImage,
    cfg: TmbConfig,
    birth: BirthModel,
    dynamics: DynamicsConfig,
    geom: GridGeometry,
    rng: np.random.Generator,
    first_track_id: int = 0,
    existing: tuple[BernoulliComponent, ...] = (),
) -> list[BernoulliComponent]:
    """
    One component with r = r_birth per bright cell of the previous frame.

    Particles: position uniform over the cell, velocity N(0, σ_v²·I₂),
    intensity uniform on [0, η_I], then propagated one step. Cells on which
    the existing components already put birth_gate or more spatial mass are
    skipped, so a component still climbing from r_birth is not duplicated.
    """
    cells = birth_cells(prev_image, cfg)
    if cells.size and existing:
        cells = cells[_claimed_mass(existing, geom)[cells] < cfg.birth_gate]

    n = cfg.n_particles
    weights = np.full(n, 1.0 / n)
    ox, oy = geom.origin
    out = []
    for offset, cell in enumerate(cells.tolist()):
        row, col = divmod(cell, geom.width)
        states = np.empty((n, STATE_DIM))
        states[:, P1] = ox + (col + rng.uniform(0.0, 1.0, size=n)) * geom.cell_size
        states[:, P2] = oy + (row + rng.uniform(0.0, 1.0, size=n)) * geom.cell_size
        states[:, V1:GAMMA] = rng.normal(0.0, np.sqrt(birth.sigma_v2), size=(n, 2))
        states[:, GAMMA] = rng.uniform(0.0, birth.eta_i, size=n)
        states = propagate_states(states, dynamics, rng)
        out.append(
            BernoulliComponent(
                r=cfg.r_birth,
                spatial=ParticleSet(states, weights),
                track_id=first_track_id + offset,
            )
        )
    return out


def _cap(bernoullis: list[BernoulliComponent], cfg: TmbConfig, k: int) -> list[BernoulliComponent]:
    if len(bernoullis) <= cfg.max_components:
        return bernoullis
    logger.warning(
        "[TMB] k=%d component cap %d binds (%d components)", k, cfg.max_components, len(bernoullis)
    )
    ranked = sorted(bernoullis, key=lambda b: (-b.r, b.track_id))[: cfg.max_components]
    return sorted(ranked, key=lambda b: b.track_id)


def tmb_step(
    state: PmbState,
    image: IntensityImage,
    prev_image: Optional[IntensityImage],
    cfg: TmbConfig,
    birth: BirthModel,
    dynamics: DynamicsConfig,
    noise: NoiseModel,
    geom: GridGeometry,
    rng: np.random.Generator,
) -> PmbState:
    """
    One T-MB step from k−1 to k: survival + propagation, births from the
    previous frame, independent updates, pruning below eta_t.

    The returned state has an empty Poisson part.
    """
    motion = dynamics.model_copy(update={"p_s": cfg.p_s})
    predicted = [predict_bernoulli(b, motion, rng) for b in state.bernoullis]

    next_id = state.next_track_id
    if prev_image is not None:
        born = tmb_birth(prev_image, cfg, birth, motion, geom, rng, next_id, state.bernoullis)
        predicted.extend(born)
        next_id += len(born)

    updated = []
    for b in predicted:
        posterior = tmb_update_component(b, image, noise, geom, cfg, rng)
        if posterior is not None and posterior.r >= cfg.eta_t:
            updated.append(posterior)
    updated = _cap(updated, cfg, image.k)

    logger.debug("[TMB] k=%d components=%d", image.k, len(updated))
    return PmbState(k=image.k, bernoullis=tuple(updated), next_track_id=next_id)
