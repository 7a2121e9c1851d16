"""
Metrics service.

Position-only OSPA between estimated and true object sets, and MOSPA
aggregation across Monte Carlo runs.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from app.models.errors import ShapeError
from app.models.schemas import MospaRow, OspaParams


@dataclass(frozen=True)
class OspaResult:
    """Total OSPA and its localization / cardinality parts (p-th power split)."""

    ospa: float
    localization: float
    cardinality: float


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return np.empty((0, 2))
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ShapeError(f"Expected an (n, 2) array of positions, got shape {arr.shape}")
    return arr


def optimal_assignment(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """
    Minimum-cost assignment of the rows of an m×n cost matrix (m <= n).

    Returns (rows, cols, total cost). Among equally cheap assignments the one
    scipy's solver finds is returned; it is not forced to the lowest column
    indices. The total, which is all OSPA uses, is the same for every one.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), 0.0
    rows, cols = linear_sum_assignment(cost)
    return rows, cols, float(cost[rows, cols].sum())


def ospa_components(x, y, params: OspaParams) -> OspaResult:
    """
    OSPA distance of order p with cutoff c between two 2-D point sets.

    With m = |X| <= n = |Y|: ((min Σ d_c^p + c^p (n − m)) / n)^(1/p).
    The parts are (Σ d_c^p / n)^(1/p) and (c^p (n − m) / n)^(1/p).
    """
    x, y = _as_points(x), _as_points(y)
    if x.shape[0] > y.shape[0]:
        x, y = y, x
    m, n = x.shape[0], y.shape[0]
    if n == 0:
        return OspaResult(0.0, 0.0, 0.0)
    c, p = params.c, params.p
    loc = 0.0
    if m > 0:
        cost = np.minimum(cdist(x, y), c) ** p
        _, _, loc = optimal_assignment(cost)
    card = c**p * (n - m)
    return OspaResult(
        ospa=float(((loc + card) / n) ** (1.0 / p)),
        localization=float((loc / n) ** (1.0 / p)),
        cardinality=float((card / n) ** (1.0 / p)),
    )


def ospa(x, y, params: OspaParams) -> float:
    return ospa_components(x, y, params).ospa


def _rectangular(values: Sequence[Sequence[float]]) -> np.ndarray:
    rows = [list(r) for r in values]
    if not rows:
        raise ShapeError("No runs to aggregate")
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise ShapeError(f"Runs have different lengths: {sorted(lengths)}")
    return np.array(rows, dtype=float)


def mospa_curve(values: Sequence[Sequence[float]]) -> np.ndarray:
    """Per-k mean over runs of a (runs × steps) table."""
    return _rectangular(values).mean(axis=0)


def mospa_summary(values: Sequence[Sequence[float]], first_k: int = 1) -> list[MospaRow]:
    """Mean, standard error and run count per k."""
    table = _rectangular(values)
    n_runs = table.shape[0]
    mean = table.mean(axis=0)
    if n_runs > 1:
        stderr = table.std(axis=0, ddof=1) / np.sqrt(n_runs)
    else:
        stderr = np.zeros_like(mean)
    return [
        MospaRow(k=first_k + i, mospa_mean=float(mu), mospa_stderr=float(se), n_runs=n_runs)
        for i, (mu, se) in enumerate(zip(mean, stderr))
    ]
