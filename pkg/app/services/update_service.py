"""
Update service.

Turns association marginals into the multi-Bernoulli part of the posterior,
recycles low-existence components into the Poisson intensity, enforces the
PHD particle budget and extracts point estimates.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from app.models.rfs import BernoulliComponent, ObjectState, ParticleSet, PmbState, PoissonIntensity
from app.models.schemas import UpdateConfig
from app.services.association_service import AssociationWeights, CellSupport, MarginalPmfs
from app.services.particle_service import normalize, resample, weighted_mean

logger = logging.getLogger("tbdtrack.update")


@dataclass(frozen=True)
class UpdateResult:
    """Posterior Bernoullis, the recycled PHD mass and the next unused track id."""

    bernoullis: tuple[BernoulliComponent, ...]
    phd_increment: PoissonIntensity = field(default_factory=PoissonIntensity)
    next_track_id: int = 0


def _cell_lookup(cells: np.ndarray, values: np.ndarray, query: np.ndarray) -> np.ndarray:
    """values[cells == q] for every q (zero where q is not listed)."""
    out = np.zeros(query.shape[0])
    if cells.shape[0] == 0:
        return out
    pos = np.clip(np.searchsorted(cells, query), 0, cells.shape[0] - 1)
    hit = cells[pos] == query
    out[hit] = values[pos[hit]]
    return out


def _legacy_mixture(support: CellSupport, cells: np.ndarray, probs: np.ndarray) -> ParticleSet:
    """Σ_m p_m · f^(j,m) over the component's supported cells; total weight Σ p_m."""
    order = np.argsort(cells)
    p = _cell_lookup(cells[order], probs[order], support.cells)
    return ParticleSet(support.particles.states, p * support.share)


def _bernoulli(
    r: float,
    mixture: ParticleSet,
    track_id: int,
    cfg: UpdateConfig,
    rng: np.random.Generator,
    keep_weights_below_eta_r: bool = False,
) -> BernoulliComponent:
    """
    Bernoulli with the mixture resampled to n_bernoulli_particles. With
    keep_weights_below_eta_r, recycle-bound components (r < eta_r) keep their
    weighted particles instead.
    """
    if r >= cfg.eta_r or not keep_weights_below_eta_r:
        spatial = normalize(resample(mixture, cfg.n_bernoulli_particles, rng))
    else:
        spatial = normalize(mixture)
    return BernoulliComponent(r=min(r, 1.0), spatial=spatial, track_id=track_id)


def _legacy_components(
    w: AssociationWeights,
    m: MarginalPmfs,
    track_ids: tuple[int, ...],
    cfg: UpdateConfig,
    rng: np.random.Generator,
    keep_weights_below_eta_r: bool = False,
) -> list[BernoulliComponent]:
    out = []
    for assoc, marginal, track_id in zip(w.legacy, m.legacy, track_ids):
        r = marginal.existence
        if r <= 0 or assoc.support is None:
            continue
        mixture = _legacy_mixture(assoc.support, marginal.cells, marginal.probs)
        if mixture.total_weight <= 0:
            continue
        out.append(_bernoulli(r, mixture, track_id, cfg, rng, keep_weights_below_eta_r))
    return out


def _new_existence(w: AssociationWeights, m: MarginalPmfs) -> np.ndarray:
    """r = p1 · r_new per table cell."""
    p1 = _cell_lookup(m.new_cells, m.p1, w.new.cells)
    return np.clip(p1 * w.new.r, 0.0, 1.0)


def mb_approximation(
    w: AssociationWeights,
    m: MarginalPmfs,
    cfg: UpdateConfig,
    rng: np.random.Generator,
    track_ids: Optional[Iterable[int]] = None,
    first_track_id: int = 0,
) -> UpdateResult:
    """
    Multi-Bernoulli approximation of the posterior.

    Legacy component j: r = Σ_m p(a_j = m), spatial pdf the p-weighted mixture
    of its conditional densities; r = 0 components are dropped. New component
    for cell m: r = p1_m · r_new_m with the PHD conditional for cell m as pdf
    and a fresh track id. Every component is resampled to
    n_bernoulli_particles.
    """
    track_ids = tuple(track_ids) if track_ids is not None else tuple(range(w.n_legacy))
    bernoullis = _legacy_components(w, m, track_ids, cfg, rng)

    next_id = first_track_id
    support = w.new.support
    if support is not None:
        r_new = _new_existence(w, m)
        for row in np.flatnonzero(r_new > 0):
            cell = int(w.new.cells[row])
            conditional = support.conditional(cell)
            if len(conditional) == 0:
                continue
            bernoullis.append(_bernoulli(float(r_new[row]), conditional, next_id, cfg, rng))
            next_id += 1
    return UpdateResult(bernoullis=tuple(bernoullis), next_track_id=next_id)


def recycle(
    components: Iterable[BernoulliComponent],
    cfg: UpdateConfig,
) -> tuple[tuple[BernoulliComponent, ...], PoissonIntensity]:
    """
    Move every component with r < eta_r into a PHD increment.

    A recycled component contributes its particles scaled to total weight r,
    so the increment's mass equals the recycled existence mass.
    """
    kept = []
    recycled = []
    for b in components:
        if b.r >= cfg.eta_r:
            kept.append(b)
        elif b.r > 0:
            recycled.append(b.spatial.scaled(b.r / b.spatial.total_weight))
    return tuple(kept), PoissonIntensity(ParticleSet.concatenate(recycled))


def approximate_and_recycle(
    w: AssociationWeights,
    m: MarginalPmfs,
    cfg: UpdateConfig,
    rng: np.random.Generator,
    track_ids: Iterable[int],
    first_track_id: int,
) -> UpdateResult:
    """
    mb_approximation followed by recycle, without materialising the
    recycle-bound new components one by one.

    New-object cells below eta_r go straight into the PHD increment with
    particle weights r_m · share, and recycle-bound legacy components are
    not resampled first. Track ids are only handed out to new components
    that are kept.
    """
    track_ids = tuple(track_ids)
    legacy = _legacy_components(w, m, track_ids, cfg, rng, keep_weights_below_eta_r=True)
    kept, increment = recycle(legacy, cfg)
    kept = list(kept)
    pieces = [increment.particles]

    next_id = first_track_id
    support = w.new.support
    if support is not None:
        r_new = _new_existence(w, m)
        r_per_particle = _cell_lookup(w.new.cells, r_new, support.cells)
        low = (r_per_particle > 0) & (r_per_particle < cfg.eta_r)
        if np.any(low):
            pieces.append(
                ParticleSet(support.particles.states[low], r_per_particle[low] * support.share[low])
            )
        for row in np.flatnonzero(r_new >= cfg.eta_r):
            conditional = support.conditional(int(w.new.cells[row]))
            if len(conditional) == 0:
                continue
            kept.append(_bernoulli(float(r_new[row]), conditional, next_id, cfg, rng))
            next_id += 1

    return UpdateResult(
        bernoullis=tuple(kept),
        phd_increment=PoissonIntensity(ParticleSet.concatenate(pieces)),
        next_track_id=next_id,
    )


def cap_phd(phd: PoissonIntensity, cfg: UpdateConfig, rng: np.random.Generator) -> PoissonIntensity:
    """Resample down to n_phd_particles_cap if over budget; μ is preserved."""
    if len(phd) <= cfg.n_phd_particles_cap:
        return phd
    capped = resample(phd.particles, cfg.n_phd_particles_cap, rng)
    logger.debug("[UPDATE] PHD capped %d -> %d particles", len(phd), len(capped))
    return PoissonIntensity(capped)


def extract_estimates(state: PmbState, cfg: UpdateConfig) -> list[tuple[int, ObjectState, float]]:
    """(track_id, weighted mean, r) for every component with r > estimate_threshold."""
    estimates = [
        (b.track_id, weighted_mean(b.spatial), b.r)
        for b in state.bernoullis
        if b.r > cfg.estimate_threshold
    ]
    return sorted(estimates, key=lambda e: e[0])
