"""
Measurement model.

Grid indexing, the single-cell point spread function and the Rayleigh
likelihoods of the simplified superpositional model: a cell holding no object
is Rayleigh(σ_n), a cell holding an object of intensity γ is
Rayleigh(sqrt(γ + σ_n²)).

Linear-domain densities are flushed to the smallest positive normal instead
of underflowing to zero for z > 0. β assembly works from the log versions.
"""

from dataclasses import dataclass

import numpy as np

from app.models.errors import LikelihoodDomainError
from app.models.rfs import GAMMA, P1, P2, ObjectState
from app.models.schemas import GridGeometry, NoiseModel

OUTSIDE = -1

_TINY = np.finfo(float).tiny


@dataclass(frozen=True, eq=False)
class IntensityImage:
    """One frame z_k: M non-negative cell values in row-major order."""

    cells: np.ndarray
    geometry: GridGeometry
    k: int

    def __post_init__(self) -> None:
        cells = np.array(self.cells, dtype=float).reshape(-1)
        if cells.shape[0] != self.geometry.n_cells:
            raise ValueError(
                f"Image has {cells.shape[0]} cells, geometry expects {self.geometry.n_cells}"
            )
        if not np.all(np.isfinite(cells)) or np.any(cells < 0):
            raise ValueError(f"Image {self.k}: cell values must be finite and non-negative")
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)

    def as_grid(self) -> np.ndarray:
        """(height, width) view, row 0 at the origin."""
        return self.cells.reshape(self.geometry.height, self.geometry.width)


# ============================================
# Grid indexing and PSF
# ============================================

def cell_indices(geom: GridGeometry, p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    """Vectorised cell_index. Half-open cells [a, a + cell_size)."""
    ox, oy = geom.origin
    col = np.floor((np.asarray(p1, dtype=float) - ox) / geom.cell_size)
    row = np.floor((np.asarray(p2, dtype=float) - oy) / geom.cell_size)
    inside = (col >= 0) & (col < geom.width) & (row >= 0) & (row < geom.height)
    index = np.full(np.shape(col), OUTSIDE, dtype=np.int64)
    index[inside] = (row[inside] * geom.width + col[inside]).astype(np.int64)
    return index


def cell_index(geom: GridGeometry, p1: float, p2: float) -> int:
    """Row-major index of the cell containing (p1, p2), or OUTSIDE."""
    return int(cell_indices(geom, np.array([p1]), np.array([p2]))[0])


def state_cells(geom: GridGeometry, states: np.ndarray) -> np.ndarray:
    """Cell index per row of an (N, 5) state matrix."""
    return cell_indices(geom, states[:, P1], states[:, P2])


def psf_value(x: ObjectState, m: int, geom: GridGeometry) -> float:
    """d^{(m)}(x): max(γ, 0) on the occupied cell, 0 elsewhere."""
    if cell_index(geom, x.p1, x.p2) != m:
        return 0.0
    return max(x.gamma, 0.0)


def clamped_intensity(states: np.ndarray) -> np.ndarray:
    return np.maximum(states[:, GAMMA], 0.0)


# ============================================
# Rayleigh likelihoods
# ============================================

def _check_domain(z: np.ndarray) -> None:
    if np.any(z < 0) or np.any(np.isnan(z)):
        raise LikelihoodDomainError("Measurement values must be >= 0")


def log_rayleigh(z: np.ndarray, scale2: np.ndarray) -> np.ndarray:
    """log of z/s² · exp(-z²/(2s²)); -inf at z = 0."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(z) - np.log(scale2) - z * z / (2.0 * scale2)


def _flush(log_density: np.ndarray, z: np.ndarray) -> np.ndarray:
    density = np.exp(log_density)
    return np.where((density < _TINY) & (z > 0), _TINY, density)


def log_f0(z: np.ndarray, noise: NoiseModel) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    _check_domain(z)
    return log_rayleigh(z, noise.sigma_n**2)


def log_f1(z: np.ndarray, gamma: np.ndarray, noise: NoiseModel) -> np.ndarray:
    """Log-likelihood of z under an object of intensity gamma (clamped at 0)."""
    z = np.asarray(z, dtype=float)
    _check_domain(z)
    return log_rayleigh(z, np.maximum(gamma, 0.0) + noise.sigma_n**2)


def f0_likelihood(z: float, noise: NoiseModel) -> float:
    """
    Noise-only density f0(z) = Rayleigh(z; σ_n).

    Raises:
        LikelihoodDomainError: z < 0.
    """
    z_arr = np.asarray(z, dtype=float)
    return float(_flush(log_f0(z_arr, noise), z_arr))


def f1_likelihood(
    z: float,
    x: ObjectState,
    m: int,
    geom: GridGeometry,
    noise: NoiseModel,
) -> float:
    """
    Density of z^{(m)} when object x contributes to cell m:
    Rayleigh(z; sqrt(d^{(m)}(x) + σ_n²)).

    Raises:
        LikelihoodDomainError: z < 0.
    """
    z_arr = np.asarray(z, dtype=float)
    d = psf_value(x, m, geom)
    return float(_flush(log_f1(z_arr, np.asarray(d), noise), z_arr))
