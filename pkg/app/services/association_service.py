"""
Association service.

Builds the association weights of the exact PMB update on an intensity image,
computes approximate association marginals with the sum-product algorithm and
exact marginals by enumeration (small instances only).

Everything is sparse: a legacy component only has entries for cells its
particles occupy, and the new-object table only lists cells that carry PHD
mass or legacy entries. Cell indices are the row-major grid indices of the
measurement module; "no association" is kept separately as p0 / beta0.
"""

import logging
import math
from dataclasses import dataclass
from typing import Literal, Mapping, Optional, Sequence

import numpy as np

from app.models.errors import InstanceTooLargeError
from app.models.rfs import ParticleSet, PmbState
from app.models.schemas import GridGeometry, NoiseModel
from app.services.measurement_service import (
    OUTSIDE,
    IntensityImage,
    clamped_intensity,
    log_f0,
    log_f1,
    state_cells,
)

logger = logging.getLogger("tbdtrack.association")

Contribution = Literal["normalized", "psf"]

# exp() of anything above this would overflow once summed over a few edges
_LOG_RATIO_MAX = 600.0
_TINY_DENOMINATOR = 1e-300
_HUGE_MESSAGE = 1e300
# Exclusive sums below this fraction of the group total are recomputed exactly
_CANCELLATION_RTOL = 1e-6

ENUMERATION_MAX_COMPONENTS = 8
ENUMERATION_MAX_CELLS = 8


# ============================================
# Weight containers
# ============================================

@dataclass(frozen=True, eq=False)
class CellSupport:
    """
    Particles of one density that land in supported cells.

    share[i] is particle i's fraction of the mass c of its cell, so the shares
    of one cell sum to one and form the conditional pdf for that cell.
    """

    particles: ParticleSet
    cells: np.ndarray
    share: np.ndarray

    def conditional(self, m: int) -> ParticleSet:
        mask = self.cells == m
        return ParticleSet(self.particles.states[mask], self.share[mask])


@dataclass(frozen=True, eq=False)
class LegacyAssociation:
    """Weights of one predicted Bernoulli: beta0 for a miss, log beta per supported cell."""

    beta0: float
    cells: np.ndarray
    log_beta: np.ndarray
    support: Optional[CellSupport] = None

    @property
    def beta(self) -> np.ndarray:
        return np.exp(self.log_beta)

    def __len__(self) -> int:
        return self.cells.shape[0]


@dataclass(frozen=True, eq=False)
class NewAssociation:
    """
    Per-cell new-object table, cells sorted ascending.

    log_beta is log(f0(z) + c), r = c / (f0(z) + c).
    """

    cells: np.ndarray
    log_beta: np.ndarray
    r: np.ndarray
    support: Optional[CellSupport] = None

    @property
    def beta(self) -> np.ndarray:
        return np.exp(self.log_beta)

    def __len__(self) -> int:
        return self.cells.shape[0]

    def positions(self, cells: np.ndarray) -> np.ndarray:
        """Row of each given cell in the table."""
        pos = np.searchsorted(self.cells, cells)
        found = pos < len(self)
        found[found] = self.cells[pos[found]] == cells[found]
        if not np.all(found):
            missing = np.asarray(cells)[~found].tolist()
            raise ValueError(f"Cells {missing} have legacy weights but no new-object entry")
        return pos


@dataclass(frozen=True, eq=False)
class AssociationWeights:
    legacy: tuple[LegacyAssociation, ...]
    new: NewAssociation

    @property
    def n_legacy(self) -> int:
        return len(self.legacy)

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Flattened (component, table row, log ratio) arrays for every nonzero
        legacy entry, with ratio = beta / beta_new.
        """
        if not self.legacy or all(len(a) == 0 for a in self.legacy):
            empty = np.empty(0, dtype=np.int64)
            return empty, empty, np.empty(0)
        comp = np.concatenate([np.full(len(a), j, dtype=np.int64) for j, a in enumerate(self.legacy)])
        cells = np.concatenate([a.cells for a in self.legacy])
        log_beta = np.concatenate([a.log_beta for a in self.legacy])
        pos = self.new.positions(cells)
        return comp, pos, log_beta - self.new.log_beta[pos]

    @classmethod
    def from_betas(
        cls,
        beta0: Sequence[float],
        legacy_betas: Sequence[Mapping[int, float]],
        new_betas: Mapping[int, float],
        new_r: Optional[Mapping[int, float]] = None,
    ) -> "AssociationWeights":
        """
        Build weights straight from β values (no particles attached).

        Zero entries are dropped. Every legacy cell must appear in new_betas.
        """
        if len(beta0) != len(legacy_betas):
            raise ValueError(f"Got {len(beta0)} miss weights for {len(legacy_betas)} components")
        cells = np.array(sorted(new_betas), dtype=np.int64)
        new_beta = np.array([new_betas[m] for m in cells], dtype=float)
        if np.any(new_beta <= 0):
            raise ValueError("New-object weights must be positive")
        r = np.array([(new_r or {}).get(int(m), 0.0) for m in cells], dtype=float)
        new = NewAssociation(cells=cells, log_beta=np.log(new_beta), r=r)

        legacy = []
        for b0, betas in zip(beta0, legacy_betas):
            if b0 < 0 or any(v < 0 for v in betas.values()):
                raise ValueError("Association weights must be non-negative")
            kept = sorted(m for m, v in betas.items() if v > 0)
            leg_cells = np.array(kept, dtype=np.int64)
            new.positions(leg_cells)
            legacy.append(
                LegacyAssociation(
                    beta0=float(b0),
                    cells=leg_cells,
                    log_beta=np.log(np.array([betas[m] for m in kept], dtype=float)),
                )
            )
        return cls(legacy=tuple(legacy), new=new)


@dataclass(frozen=True, eq=False)
class LegacyMarginal:
    """Marginal pmf of one legacy component: p0 for a miss, probs over cells."""

    p0: float
    cells: np.ndarray
    probs: np.ndarray

    @property
    def existence(self) -> float:
        return float(self.probs.sum())

    def prob(self, m: int) -> float:
        hit = np.flatnonzero(self.cells == m)
        return float(self.probs[hit[0]]) if hit.size else 0.0


@dataclass(frozen=True, eq=False)
class MarginalPmfs:
    legacy: tuple[LegacyMarginal, ...]
    new_cells: np.ndarray
    p1: np.ndarray
    converged: bool = True
    iterations: int = 0

    def p_new(self, m: int) -> float:
        hit = np.flatnonzero(self.new_cells == m)
        return float(self.p1[hit[0]]) if hit.size else 0.0


# ============================================
# Weight construction
# ============================================

def _particle_log_mass(
    ps: ParticleSet,
    image: IntensityImage,
    noise: NoiseModel,
    geom: GridGeometry,
    contribution: Contribution,
) -> tuple[np.ndarray, np.ndarray]:
    """Cell and log(w · d · f1(z|x)) per particle; -inf where there is no support."""
    cells = state_cells(geom, ps.states)
    gamma = clamped_intensity(ps.states)
    log_mass = np.full(len(ps), -np.inf)
    ok = (cells != OUTSIDE) & (gamma > 0) & (ps.weights > 0)
    if np.any(ok):
        with np.errstate(divide="ignore"):
            terms = np.log(ps.weights[ok]) + log_f1(image.cells[cells[ok]], gamma[ok], noise)
            if contribution == "psf":
                terms = terms + np.log(gamma[ok])
        log_mass[ok] = terms
    return cells, log_mass


def _cell_support(
    ps: ParticleSet,
    cells: np.ndarray,
    log_mass: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, Optional[CellSupport]]:
    """
    Group particle masses by cell.

    Returns (sorted cells, log c per cell, support); cells whose mass
    underflows are dropped together with their particles.
    """
    idx = np.flatnonzero(np.isfinite(log_mass))
    if idx.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0), None
    cells = cells[idx]
    lm = log_mass[idx]
    uniq, inv = np.unique(cells, return_inverse=True)
    peak = np.full(uniq.shape[0], -np.inf)
    np.maximum.at(peak, inv, lm)
    scaled = np.exp(lm - peak[inv])
    sums = np.bincount(inv, weights=scaled, minlength=uniq.shape[0])
    log_c = peak + np.log(sums)
    share = scaled / sums[inv]
    support = CellSupport(
        particles=ParticleSet(ps.states[idx], ps.weights[idx]),
        cells=cells,
        share=share,
    )
    return uniq, log_c, support


def _restrict(support: Optional[CellSupport], keep_cells: np.ndarray) -> Optional[CellSupport]:
    if support is None:
        return None
    mask = np.isin(support.cells, keep_cells)
    if not np.any(mask):
        return None
    return CellSupport(
        particles=support.particles.subset(mask),
        cells=support.cells[mask],
        share=support.share[mask],
    )


def build_weights(
    state: PmbState,
    image: IntensityImage,
    noise: NoiseModel,
    geom: GridGeometry,
    contribution: Contribution = "psf",
    min_new_existence: float = 1e-6,
) -> AssociationWeights:
    """
    Association weights for a predicted PMB state and the image at the same k.

    Legacy component j, cell m: β = r·c with c = Σ w·d·f1(z^(m)|x) over its
    particles in m, β0 = 1 − r. New-object cell m: β_new = f0(z^(m)) + c with
    c summed over the PHD particles in m, r_new = c / β_new. Cells whose r_new
    falls below min_new_existence keep only their noise term.
    """
    legacy = []
    legacy_cells = []
    for b in state.bernoullis:
        if b.r <= 0 or len(b.spatial) == 0:
            legacy.append(
                LegacyAssociation(beta0=1.0 - b.r, cells=np.empty(0, dtype=np.int64), log_beta=np.empty(0))
            )
            continue
        cells, log_mass = _particle_log_mass(b.spatial, image, noise, geom, contribution)
        uniq, log_c, support = _cell_support(b.spatial, cells, log_mass)
        legacy.append(
            LegacyAssociation(
                beta0=1.0 - b.r,
                cells=uniq,
                log_beta=math.log(b.r) + log_c,
                support=support,
            )
        )
        legacy_cells.append(uniq)

    phd = state.phd.particles
    phd_cells = np.empty(0, dtype=np.int64)
    phd_log_c = np.empty(0)
    phd_support = None
    if len(phd) > 0:
        cells, log_mass = _particle_log_mass(phd, image, noise, geom, contribution)
        phd_cells, phd_log_c, phd_support = _cell_support(phd, cells, log_mass)

    table = np.union1d(phd_cells, np.concatenate(legacy_cells)) if legacy_cells else phd_cells
    table = table.astype(np.int64)
    log_c = np.full(table.shape[0], -np.inf)
    log_c[np.searchsorted(table, phd_cells)] = phd_log_c
    lf0 = log_f0(image.cells[table], noise)
    log_beta = np.logaddexp(lf0, log_c)
    r = np.exp(log_c - log_beta)

    weak = r < min_new_existence
    if np.any(weak):
        log_beta = np.where(weak, lf0, log_beta)
        r = np.where(weak, 0.0, r)
        phd_support = _restrict(phd_support, table[~weak])
        # cells with neither legacy entries nor new-object support carry no factor
        has_legacy = np.isin(table, np.concatenate(legacy_cells)) if legacy_cells else np.zeros_like(weak)
        keep = ~weak | has_legacy
        table, log_beta, r = table[keep], log_beta[keep], r[keep]

    logger.debug(
        "[WEIGHTS] k=%d legacy=%d edges=%d table=%d",
        state.k, len(legacy), sum(len(a) for a in legacy), table.shape[0],
    )
    return AssociationWeights(
        legacy=tuple(legacy),
        new=NewAssociation(cells=table, log_beta=log_beta, r=r, support=phd_support),
    )


# ============================================
# Sum-product algorithm
# ============================================

def _group_members(groups: np.ndarray, n_groups: int) -> list[np.ndarray]:
    order = np.argsort(groups, kind="stable")
    bounds = np.searchsorted(groups[order], np.arange(1, n_groups))
    return np.split(order, bounds)


def _exclusive_sums(
    values: np.ndarray,
    groups: np.ndarray,
    n_groups: int,
    members: list[np.ndarray],
) -> np.ndarray:
    """For every edge, the sum of values over the other edges of its group."""
    total = np.bincount(groups, weights=values, minlength=n_groups)
    excl = total[groups] - values
    suspect = np.flatnonzero(excl <= _CANCELLATION_RTOL * total[groups])
    for e in suspect:
        others = members[groups[e]]
        excl[e] = values[others[others != e]].sum()
    return np.maximum(excl, 0.0)


def _trivial_marginals(w: AssociationWeights) -> MarginalPmfs:
    legacy = tuple(
        LegacyMarginal(p0=1.0, cells=np.empty(0, dtype=np.int64), probs=np.empty(0))
        for _ in w.legacy
    )
    return MarginalPmfs(legacy=legacy, new_cells=w.new.cells, p1=np.ones(len(w.new)))


def spa_marginals(
    w: AssociationWeights,
    max_iters: int = 200,
    tol: float = 1e-6,
    damping: Optional[float] = 0.5,
) -> MarginalPmfs:
    """
    Approximate association marginals by loopy belief propagation.

    With ratio = β/β_new and ν initialised to one, each sweep computes
        φ_{j→m} = ratio_jm / (β0_j + Σ_{m'≠m} ratio_jm'·ν_{m'→j})
        ν_{m→j} = 1 / (1 + Σ_{j'≠j} φ_{j'→m})
    until the largest change in ν drops below tol. Damping (ν ← d·ν_old +
    (1 − d)·ν_new) switches on once the change has grown two sweeps running.
    Exact when the association graph is a forest.
    """
    comp, pos, log_ratio = w.edges()
    if comp.size == 0:
        return _trivial_marginals(w)

    n_legacy, n_cells = w.n_legacy, len(w.new)
    beta0 = np.array([a.beta0 for a in w.legacy], dtype=float)
    ratio = np.exp(np.minimum(log_ratio, _LOG_RATIO_MAX))
    comp_members = _group_members(comp, n_legacy)
    cell_members = _group_members(pos, n_cells)

    nu = np.ones(comp.shape[0])
    phi = np.zeros_like(nu)
    converged = False
    damped = False
    last_delta = np.inf
    rising = 0
    iteration = 0
    for iteration in range(1, max_iters + 1):
        denom = beta0[comp] + _exclusive_sums(ratio * nu, comp, n_legacy, comp_members)
        phi = np.minimum(ratio / np.maximum(denom, _TINY_DENOMINATOR), _HUGE_MESSAGE)
        nu_new = 1.0 / (1.0 + _exclusive_sums(phi, pos, n_cells, cell_members))
        if damped:
            nu_new = damping * nu + (1.0 - damping) * nu_new
        delta = float(np.max(np.abs(nu_new - nu)))
        nu = nu_new
        if delta < tol:
            converged = True
            break
        rising = rising + 1 if delta > last_delta else 0
        last_delta = delta
        if rising >= 2 and damping is not None and not damped:
            damped = True
            logger.debug("[SPA] oscillation at sweep %d, damping %.2f", iteration, damping)

    if not converged:
        logger.warning("[SPA] no convergence after %d sweeps (last change %.3g)", max_iters, last_delta)
        # phi must match the final nu for the new-object marginals
        denom = beta0[comp] + _exclusive_sums(ratio * nu, comp, n_legacy, comp_members)
        phi = np.minimum(ratio / np.maximum(denom, _TINY_DENOMINATOR), _HUGE_MESSAGE)

    belief = ratio * nu
    norm = beta0 + np.bincount(comp, weights=belief, minlength=n_legacy)
    legacy = []
    for j, edges in enumerate(comp_members):
        if norm[j] <= 0:
            legacy.append(LegacyMarginal(p0=1.0, cells=np.empty(0, dtype=np.int64), probs=np.empty(0)))
            continue
        legacy.append(
            LegacyMarginal(
                p0=float(beta0[j] / norm[j]),
                cells=w.new.cells[pos[edges]],
                probs=belief[edges] / norm[j],
            )
        )
    p1 = 1.0 / (1.0 + np.bincount(pos, weights=phi, minlength=n_cells))
    return MarginalPmfs(
        legacy=tuple(legacy),
        new_cells=w.new.cells,
        p1=p1,
        converged=converged,
        iterations=iteration,
    )


# ============================================
# Exact enumeration
# ============================================

def enumerate_marginals(w: AssociationWeights) -> MarginalPmfs:
    """
    Exact marginals over every admissible association.

    Each legacy component either misses or takes one of its supported cells,
    no cell taken twice; the weight of an association is the product of β0
    for misses and β/β_new for hits.

    Raises:
        InstanceTooLargeError: more than 8 legacy components or table cells.
        ValueError: every admissible association has zero weight.
    """
    n_legacy, n_cells = w.n_legacy, len(w.new)
    if n_legacy > ENUMERATION_MAX_COMPONENTS or n_cells > ENUMERATION_MAX_CELLS:
        raise InstanceTooLargeError(
            f"Enumeration supports at most {ENUMERATION_MAX_COMPONENTS} components and "
            f"{ENUMERATION_MAX_CELLS} cells, got {n_legacy} and {n_cells}"
        )
    comp, pos, log_ratio = w.edges()
    ratio = np.exp(log_ratio)
    options: list[list[tuple[int, int, float]]] = [[] for _ in range(n_legacy)]
    for e, (j, p) in enumerate(zip(comp.tolist(), pos.tolist())):
        options[j].append((e, p, float(ratio[e])))
    beta0 = [a.beta0 for a in w.legacy]

    p0 = np.zeros(n_legacy)
    p_edge = np.zeros(comp.shape[0])
    p_free = np.zeros(n_cells)
    total = 0.0
    choice: list[int] = [-1] * n_legacy
    used = [False] * n_cells

    def visit(j: int, weight: float) -> None:
        nonlocal total
        if weight == 0.0:
            return
        if j == n_legacy:
            total += weight
            for i, e in enumerate(choice):
                if e < 0:
                    p0[i] += weight
                else:
                    p_edge[e] += weight
            for p in range(n_cells):
                if not used[p]:
                    p_free[p] += weight
            return
        choice[j] = -1
        visit(j + 1, weight * beta0[j])
        for e, p, value in options[j]:
            if used[p]:
                continue
            used[p] = True
            choice[j] = e
            visit(j + 1, weight * value)
            used[p] = False
        choice[j] = -1

    visit(0, 1.0)
    if total <= 0:
        raise ValueError("All admissible associations have zero weight")

    legacy = []
    for j in range(n_legacy):
        edges = np.flatnonzero(comp == j)
        legacy.append(
            LegacyMarginal(
                p0=float(p0[j] / total),
                cells=w.new.cells[pos[edges]],
                probs=p_edge[edges] / total,
            )
        )
    return MarginalPmfs(
        legacy=tuple(legacy),
        new_cells=w.new.cells,
        p1=p_free / total,
    )
