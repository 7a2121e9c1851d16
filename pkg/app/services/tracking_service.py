"""
Tracking service.

Filter loops for T-TOMB/P and the T-MB baseline, one Monte Carlo run
(simulate, track, score) and the full experiment with result files.

Run i of an experiment uses seed base_seed + i for every random stream it
touches, and runs are reduced in index order, so the written results depend
on the RunConfig only.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from app.models.rfs import PmbState
from app.models.schemas import FilterKind, MospaRow, OspaParams, RunConfig
from app.services.association_service import build_weights, spa_marginals
from app.services.dynamics_service import predict_pmb
from app.services.measurement_service import IntensityImage
from app.services.metrics_service import mospa_summary, ospa_components
from app.services.simulation_service import GroundTruth, simulate
from app.services.tmb_service import tmb_step
from app.services.update_service import approximate_and_recycle, cap_phd, extract_estimates
from app.utils import file_utils
from app.utils.env_utils import get_version
from app.utils.rng_utils import filter_rng

logger = logging.getLogger("tbdtrack.tracking")

TIMING_NOTE = (
    "birth step uniform on [1, appear_before]; death step uniform on "
    "[disappear_after, n_steps] or earlier on ROI exit"
)


# ============================================
# Filter steps
# ============================================

def ttombp_step(
    state: PmbState,
    image: IntensityImage,
    cfg: RunConfig,
    rng: np.random.Generator,
) -> PmbState:
    """
    One T-TOMB/P recursion from k−1 to the image's k: predict, build
    association weights, run the sum-product algorithm, approximate the
    posterior by a multi-Bernoulli, recycle and cap the PHD.
    """
    scenario = cfg.scenario
    predicted = predict_pmb(state, cfg.dynamics, cfg.birth, rng)
    weights = build_weights(
        predicted,
        image,
        scenario.noise,
        scenario.geometry,
        contribution=cfg.association.contribution,
        min_new_existence=cfg.association.min_new_existence,
    )
    marginals = spa_marginals(
        weights,
        max_iters=cfg.association.max_iters,
        tol=cfg.association.tol,
        damping=cfg.association.damping,
    )
    result = approximate_and_recycle(
        weights,
        marginals,
        cfg.update,
        rng,
        track_ids=[b.track_id for b in predicted.bernoullis],
        first_track_id=predicted.next_track_id,
    )
    phd = cap_phd(result.phd_increment, cfg.update, rng)
    logger.debug(
        "[TTOMBP] k=%d J=%d mu=%.4g phd_particles=%d spa_iters=%d converged=%s",
        image.k, len(result.bernoullis), phd.mu, len(phd), marginals.iterations, marginals.converged,
    )
    return PmbState(
        k=image.k,
        bernoullis=result.bernoullis,
        phd=phd,
        next_track_id=result.next_track_id,
    )


@dataclass(frozen=True)
class StepEstimate:
    k: int
    estimates: list[tuple[int, Any, float]]
    n_components: int


def run_filter(
    cfg: RunConfig,
    frames: Iterable[IntensityImage],
    rng: np.random.Generator,
) -> list[StepEstimate]:
    """Run the configured filter over frames (in order) and collect estimates per k."""
    out = []
    if cfg.filter is FilterKind.TTOMBP:
        state = PmbState.initial()
        for image in frames:
            state = ttombp_step(state, image, cfg, rng)
            out.append(StepEstimate(image.k, extract_estimates(state, cfg.update), state.n_components))
        return out

    tmb = cfg.resolved_tmb()
    scenario = cfg.scenario
    state = PmbState.initial()
    prev: Optional[IntensityImage] = None
    for image in frames:
        state = tmb_step(
            state, image, prev, tmb, cfg.birth, cfg.dynamics, scenario.noise, scenario.geometry, rng
        )
        out.append(StepEstimate(image.k, extract_estimates(state, cfg.update), state.n_components))
        prev = image
    return out


# ============================================
# Scoring
# ============================================

def estimate_record(track_id: int, x, r: float) -> dict[str, Any]:
    return {
        "track_id": track_id,
        "r": r,
        "position": [x.p1, x.p2],
        "velocity": [x.v1, x.v2],
        "gamma": x.gamma,
    }


def score_step(
    k: int,
    estimates: list[dict[str, Any]],
    truth_positions: np.ndarray,
    params: OspaParams,
) -> dict[str, Any]:
    """Per-k record: estimates, OSPA with its parts, cardinality error."""
    positions = [e["position"] for e in estimates]
    result = ospa_components(positions, truth_positions, params)
    return {
        "k": k,
        "n_estimates": len(estimates),
        "n_truth": int(truth_positions.shape[0]),
        "cardinality_error": len(estimates) - int(truth_positions.shape[0]),
        "ospa": result.ospa,
        "localization": result.localization,
        "cardinality": result.cardinality,
        "estimates": estimates,
    }


def score_run(
    steps: list[StepEstimate],
    truth: GroundTruth,
    params: OspaParams,
) -> list[dict[str, Any]]:
    records = []
    for step in steps:
        estimates = [estimate_record(tid, x, r) for tid, x, r in step.estimates]
        records.append(score_step(step.k, estimates, truth.positions_at(step.k), params))
        logger.debug(
            "[RUN] k=%d estimates=%d truth=%d", step.k, len(estimates), records[-1]["n_truth"]
        )
    return records


def evaluate_records(
    truth_records: list[dict[str, Any]],
    estimate_records: list[dict[str, Any]],
    params: OspaParams,
) -> list[dict[str, Any]]:
    """Re-score stored estimates (one record per k) against a stored truth dump."""
    by_k: dict[int, list[list[float]]] = {}
    for rec in truth_records:
        by_k.setdefault(int(rec["k"]), []).append(rec["position"])
    scored = []
    for rec in estimate_records:
        k = int(rec["k"])
        truth_positions = np.array(by_k.get(k, []), dtype=float).reshape(-1, 2)
        scored.append(score_step(k, rec.get("estimates", []), truth_positions, params))
    return scored


# ============================================
# Monte Carlo runs
# ============================================

@dataclass(frozen=True)
class RunResult:
    run_index: int
    seed: int
    records: list[dict[str, Any]]
    truth_records: list[dict[str, Any]]
    wall_time: float

    @property
    def ospa(self) -> list[float]:
        return [rec["ospa"] for rec in self.records]


def run_single(cfg: RunConfig, run_index: int) -> RunResult:
    """Simulate, track and score Monte Carlo run run_index."""
    seed = cfg.base_seed + run_index
    started = time.perf_counter()
    truth, frames = simulate(cfg.scenario, seed)
    steps = run_filter(cfg, frames, filter_rng(seed))
    records = score_run(steps, truth, cfg.ospa)
    elapsed = time.perf_counter() - started
    mean_ospa = float(np.mean([r["ospa"] for r in records])) if records else 0.0
    logger.info(
        "[RUN] %s run=%d seed=%d steps=%d mean_ospa=%.4f wall=%.1fs",
        cfg.filter.value, run_index, seed, len(records), mean_ospa, elapsed,
    )
    return RunResult(
        run_index=run_index,
        seed=seed,
        records=records,
        truth_records=list(truth.records()),
        wall_time=elapsed,
    )


@dataclass(frozen=True)
class ExperimentSummary:
    output_dir: Path
    rows: list[MospaRow] = field(default_factory=list)
    wall_time: float = 0.0


def _run_all(cfg: RunConfig, max_workers: int) -> list[RunResult]:
    indices = range(cfg.n_runs)
    if max_workers <= 1 or cfg.n_runs == 1:
        return [run_single(cfg, i) for i in indices]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        # map yields in submission order
        return list(pool.map(run_single, repeat(cfg), indices))


def write_run(directory: Path, result: RunResult) -> None:
    run_dir = file_utils.ensure_dir(directory / "runs" / str(result.run_index))
    file_utils.write_jsonl(run_dir / "estimates.jsonl", result.records)
    file_utils.write_jsonl(run_dir / "truth.jsonl", result.truth_records)


def run_experiment(
    cfg: RunConfig,
    max_workers: int = 1,
    output_dir: Optional[str | Path] = None,
) -> ExperimentSummary:
    """
    Run every Monte Carlo replication and write the result files:
    mospa.csv, runs/<i>/estimates.jsonl, runs/<i>/truth.jsonl and meta.json.

    Raises:
        RuntimeError: a result file could not be written.
    """
    out = Path(output_dir or cfg.output_dir)
    started = time.perf_counter()
    logger.info(
        "[EXPERIMENT] filter=%s runs=%d base_seed=%d workers=%d out=%s",
        cfg.filter.value, cfg.n_runs, cfg.base_seed, max_workers, out,
    )
    results = _run_all(cfg, max_workers)
    file_utils.ensure_dir(out)
    for result in results:
        write_run(out, result)

    rows = mospa_summary([r.ospa for r in results], first_k=1)
    file_utils.write_mospa_csv(out / "mospa.csv", rows)
    elapsed = time.perf_counter() - started
    file_utils.write_json(
        out / "meta.json",
        {
            "config": cfg.model_dump(mode="json"),
            "version": get_version(),
            "wall_time_s": elapsed,
            "n_runs": cfg.n_runs,
            "filter": cfg.filter.value,
            "seeds": [r.seed for r in results],
            "truth_timing": TIMING_NOTE,
        },
    )
    average = float(np.mean([row.mospa_mean for row in rows])) if rows else 0.0
    logger.info("[EXPERIMENT] done: %d runs, mean MOSPA %.4f, %.1fs", cfg.n_runs, average, elapsed)
    return ExperimentSummary(output_dir=out, rows=rows, wall_time=elapsed)
