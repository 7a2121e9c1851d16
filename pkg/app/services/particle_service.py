"""
Particle bookkeeping.

Normalization, systematic resampling and point estimates over ParticleSets.
"""

import math

import numpy as np

from app.models.errors import DegenerateParticleSetError
from app.models.rfs import ObjectState, ParticleSet


def _require_mass(ps: ParticleSet) -> float:
    total = ps.total_weight
    if len(ps) == 0 or not math.isfinite(total) or total <= 0:
        raise DegenerateParticleSetError(
            f"Particle set has no usable mass (n={len(ps)}, total={total})"
        )
    return total


def normalize(ps: ParticleSet) -> ParticleSet:
    """
    Rescale weights to sum to one.

    Raises:
        DegenerateParticleSetError: zero or non-finite total weight.
    """
    total = _require_mass(ps)
    if ps.total_weight == 1.0:
        return ps
    return ps.with_weights(ps.weights / total)


def systematic_indices(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Indices selected by systematic (low-variance) resampling.

    One uniform draw u ~ U[0, 1/n) places n evenly spaced pointers on the
    normalized cumulative weights.
    """
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    # Pointers stay below 1, so pin the CDF to 1 from the last positive weight
    # on; trailing zero-weight particles can then never be selected.
    last = np.flatnonzero(weights > 0)[-1]
    cdf[last:] = 1.0
    pointers = rng.uniform(0.0, 1.0 / n) + np.arange(n) / n
    return np.searchsorted(cdf, pointers, side="right")


def resample(ps: ParticleSet, n: int, rng: np.random.Generator) -> ParticleSet:
    """
    Draw n equally weighted particles by systematic resampling.

    The total weight of the input is preserved (each output particle carries
    total/n), so the same routine serves normalized pdfs and PHDs.

    Raises:
        DegenerateParticleSetError: zero or non-finite total weight.
        ValueError: n < 1.
    """
    if n < 1:
        raise ValueError(f"Resample size must be >= 1, got {n}")
    total = _require_mass(ps)
    idx = systematic_indices(ps.weights, n, rng)
    return ParticleSet(ps.states[idx], np.full(n, total / n))


def weighted_mean(ps: ParticleSet) -> ObjectState:
    """Component-wise weighted average of the particle states."""
    total = _require_mass(ps)
    return ObjectState.from_array(ps.weights @ ps.states / total)


def effective_sample_size(ps: ParticleSet) -> float:
    """Kish effective sample size, 1 / Σ w̃²."""
    total = _require_mass(ps)
    w = ps.weights / total
    return float(1.0 / np.sum(w * w))
