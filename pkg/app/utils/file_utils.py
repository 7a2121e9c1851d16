"""
File handling utilities.

Result and frame I/O for experiments: image frames as CSV grids, truth and
estimate dumps as JSON-lines, the aggregated MOSPA table as CSV, and the run
metadata record. Write failures are re-raised as RuntimeError naming the path.
"""

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Iterator

import numpy as np

from app.models.schemas import GridGeometry, MospaRow
from app.services.measurement_service import IntensityImage

MOSPA_COLUMNS = ("k", "mospa_mean", "mospa_stderr", "n_runs")


def ensure_dir(path: str | Path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise RuntimeError(f"Cannot create directory: {path}") from e
    return path


def _check_finite(value: Any, path: Path) -> None:
    """Reject NaN/Inf anywhere in a JSON-ready structure."""
    if isinstance(value, float) and not math.isfinite(value):
        raise ValueError(f"Refusing to write non-finite value to {path}")
    if isinstance(value, dict):
        for v in value.values():
            _check_finite(v, path)
    elif isinstance(value, (list, tuple)):
        for v in value:
            _check_finite(v, path)


# ============================================
# JSON / JSON-lines
# ============================================

def write_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> int:
    """Write one JSON object per line. Returns the number of records."""
    path = Path(path)
    ensure_dir(path.parent)
    count = 0
    try:
        with path.open("w", encoding="utf-8") as f:
            for rec in records:
                _check_finite(rec, path)
                f.write(json.dumps(rec, allow_nan=False))
                f.write("\n")
                count += 1
    except OSError as e:
        raise RuntimeError(f"Cannot write file: {path}") from e
    return count


def read_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    yield json.loads(line)
    except OSError as e:
        raise RuntimeError(f"Cannot read file: {path}") from e


def write_json(path: str | Path, data: dict[str, Any]) -> None:
    path = Path(path)
    ensure_dir(path.parent)
    try:
        path.write_text(json.dumps(data, indent=2, allow_nan=False), encoding="utf-8")
    except OSError as e:
        raise RuntimeError(f"Cannot write file: {path}") from e


def read_text(path: str | Path) -> str:
    path = Path(path)
    try:
        return path.read_text(encoding="utf-8")
    except OSError as e:
        raise RuntimeError(f"Cannot read file: {path}") from e


# ============================================
# Frames
# ============================================

def frame_path(directory: str | Path, k: int) -> Path:
    return Path(directory) / f"frame_{k:04d}.csv"


def write_frame(directory: str | Path, image: IntensityImage) -> Path:
    """One CSV per frame: height rows of width values, row 0 at the origin."""
    path = frame_path(directory, image.k)
    ensure_dir(path.parent)
    try:
        np.savetxt(path, image.as_grid(), delimiter=",", fmt="%.17g")
    except OSError as e:
        raise RuntimeError(f"Cannot write file: {path}") from e
    return path


def read_frame(directory: str | Path, k: int, geometry: GridGeometry) -> IntensityImage:
    path = frame_path(directory, k)
    try:
        grid = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as e:
        raise RuntimeError(f"Cannot read file: {path}") from e
    if grid.shape != (geometry.height, geometry.width):
        raise ValueError(f"{path}: expected {geometry.height}x{geometry.width} grid, got {grid.shape}")
    return IntensityImage(grid.reshape(-1), geometry, k)


def read_frames(directory: str | Path, geometry: GridGeometry) -> list[IntensityImage]:
    """All frame_<k>.csv files of a directory, ordered by k."""
    paths = sorted(Path(directory).glob("frame_*.csv"))
    if not paths:
        raise ValueError(f"No frames found in {directory}")
    ks = sorted(int(p.stem.split("_", 1)[1]) for p in paths)
    return [read_frame(directory, k, geometry) for k in ks]


# ============================================
# MOSPA table
# ============================================

def write_mospa_csv(path: str | Path, rows: Iterable[MospaRow]) -> None:
    path = Path(path)
    ensure_dir(path.parent)
    try:
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(MOSPA_COLUMNS)
            for row in rows:
                _check_finite([row.mospa_mean, row.mospa_stderr], path)
                writer.writerow([row.k, repr(row.mospa_mean), repr(row.mospa_stderr), row.n_runs])
    except OSError as e:
        raise RuntimeError(f"Cannot write file: {path}") from e


def read_mospa_csv(path: str | Path) -> list[MospaRow]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as f:
            return [MospaRow(**row) for row in csv.DictReader(f)]
    except OSError as e:
        raise RuntimeError(f"Cannot read file: {path}") from e
