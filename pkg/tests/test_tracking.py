import json

import numpy as np
import pytest

from app.models.rfs import PmbState
from app.models.schemas import FilterKind, OspaParams, RunConfig
from app.services.measurement_service import IntensityImage
from app.services.simulation_service import render_image
from app.services.tracking_service import (
    evaluate_records,
    run_experiment,
    run_filter,
    run_single,
    score_step,
    ttombp_step,
)
from app.services.update_service import extract_estimates
from app.utils import file_utils


@pytest.fixture
def dense_birth_config(small_run_config: RunConfig, small_birth) -> RunConfig:
    return small_run_config.model_copy(update={"birth": small_birth})


# ============================================
# Single recursion
# ============================================

def test_blank_frame_leaves_nothing_behind(small_run_config, rng):
    geom = small_run_config.scenario.geometry
    image = IntensityImage(np.zeros(geom.n_cells), geom, 1)
    state = ttombp_step(PmbState.initial(), image, small_run_config, rng)
    assert state.k == 1
    assert state.n_components == 0
    assert state.phd.mu == 0.0


def test_noise_only_frames_give_no_estimates(dense_birth_config, rng):
    cfg = dense_birth_config
    scenario = cfg.scenario
    state = PmbState.initial()
    for k in range(1, 6):
        image = render_image(np.empty((0, 5)), scenario.noise, scenario.geometry, rng, k)
        state = ttombp_step(state, image, cfg, rng)
        assert extract_estimates(state, cfg.update) == []
    # the undetected-object intensity stays of the order of the accumulated birth mass
    assert state.phd.mu < 20 * 5 * cfg.birth.mu_b
    assert len(state.phd) <= cfg.update.n_phd_particles_cap


def test_component_count_bounded_by_cells(dense_birth_config, rng):
    cfg = dense_birth_config
    scenario = cfg.scenario
    obj = np.array([[4.5, 4.5, 0.0, 0.0, 10.0], [11.5, 11.5, 0.0, 0.0, 10.0]])
    state = PmbState.initial()
    for k in range(1, 9):
        before = state.n_components
        image = render_image(obj, scenario.noise, scenario.geometry, rng, k)
        state = ttombp_step(state, image, cfg, rng)
        assert state.n_components <= before + scenario.geometry.n_cells
        assert all(cfg.update.eta_r <= b.r <= 1.0 for b in state.bernoullis)
        ids = [b.track_id for b in state.bernoullis]
        assert len(ids) == len(set(ids))
        assert all(i < state.next_track_id for i in ids)


def test_stationary_object_is_confirmed(dense_birth_config):
    cfg = dense_birth_config
    scenario = cfg.scenario
    rng = np.random.default_rng(31)
    obj = np.array([[8.5, 8.5, 0.0, 0.0, 10.0]])
    state = PmbState.initial()
    strong = []
    for k in range(1, 16):
        image = render_image(obj, scenario.noise, scenario.geometry, rng, k)
        state = ttombp_step(state, image, cfg, rng)
        strong = [b for b in state.bernoullis if b.r > 0.9]
        if strong:
            break
    assert strong
    estimates = extract_estimates(state, cfg.update)
    assert estimates
    positions = np.array([x.position for _, x, _ in estimates])
    assert np.min(np.hypot(positions[:, 0] - 8.5, positions[:, 1] - 8.5)) < 1.5


# ============================================
# Scoring
# ============================================

def test_score_step_fields():
    est = [{"track_id": 0, "r": 0.9, "position": [0.0, 0.0], "velocity": [0.0, 0.0], "gamma": 10.0}]
    rec = score_step(3, est, np.array([[3.0, 4.0], [40.0, 40.0]]), OspaParams())
    assert rec["k"] == 3
    assert rec["n_estimates"] == 1
    assert rec["n_truth"] == 2
    assert rec["cardinality_error"] == -1
    assert rec["ospa"] == pytest.approx(np.sqrt((25 + 400) / 2))


def test_evaluate_records_matches_by_step():
    truth = [
        {"k": 1, "object_id": 0, "position": [1.0, 1.0]},
        {"k": 2, "object_id": 0, "position": [2.0, 2.0]},
    ]
    estimates = [
        {"k": 1, "estimates": [{"position": [1.0, 1.0]}]},
        {"k": 2, "estimates": []},
        {"k": 3, "estimates": []},
    ]
    scored = evaluate_records(truth, estimates, OspaParams(c=10.0))
    assert [s["ospa"] for s in scored] == [0.0, 10.0, 0.0]


def test_filter_loop_yields_one_step_per_frame(small_run_config):
    cfg = small_run_config
    geom = cfg.scenario.geometry
    frames = [IntensityImage(np.ones(geom.n_cells), geom, k) for k in range(1, 4)]
    for kind in FilterKind:
        steps = run_filter(cfg.model_copy(update={"filter": kind}), frames, np.random.default_rng(0))
        assert [s.k for s in steps] == [1, 2, 3]


# ============================================
# Experiments
# ============================================

def test_single_run_is_reproducible(small_run_config):
    a = run_single(small_run_config, 0)
    b = run_single(small_run_config, 0)
    assert a.seed == small_run_config.base_seed
    assert a.ospa == b.ospa
    assert len(a.records) == small_run_config.scenario.n_steps
    assert all(0.0 <= v <= small_run_config.ospa.c for v in a.ospa)


def test_experiment_writes_result_files(small_run_config, tmp_path):
    summary = run_experiment(small_run_config, output_dir=tmp_path / "exp")
    out = summary.output_dir
    assert (out / "mospa.csv").exists()
    assert (out / "runs" / "0" / "estimates.jsonl").exists()
    assert (out / "runs" / "0" / "truth.jsonl").exists()
    meta = json.loads((out / "meta.json").read_text())
    assert meta["n_runs"] == 1
    assert meta["seeds"] == [small_run_config.base_seed]
    assert meta["filter"] == "ttombp"
    assert RunConfig.model_validate(meta["config"]).model_dump() == small_run_config.model_dump()
    rows = file_utils.read_mospa_csv(out / "mospa.csv")
    assert [r.k for r in rows] == list(range(1, small_run_config.scenario.n_steps + 1))


def test_experiment_is_deterministic(small_run_config, tmp_path):
    run_experiment(small_run_config, output_dir=tmp_path / "a")
    run_experiment(small_run_config, output_dir=tmp_path / "b")
    assert (tmp_path / "a" / "mospa.csv").read_bytes() == (tmp_path / "b" / "mospa.csv").read_bytes()


def test_worker_count_does_not_change_results(small_run_config, tmp_path):
    cfg = small_run_config.model_copy(update={"n_runs": 2})
    serial = run_experiment(cfg, max_workers=1, output_dir=tmp_path / "serial")
    pooled = run_experiment(cfg, max_workers=2, output_dir=tmp_path / "pooled")
    assert all(r.n_runs == 2 for r in serial.rows)
    assert (tmp_path / "serial" / "mospa.csv").read_bytes() == (tmp_path / "pooled" / "mospa.csv").read_bytes()


def test_tmb_experiment_runs(small_run_config, tmp_path):
    cfg = small_run_config.model_copy(update={"filter": FilterKind.TMB})
    summary = run_experiment(cfg, output_dir=tmp_path / "tmb")
    assert len(summary.rows) == cfg.scenario.n_steps
    assert all(0.0 <= row.mospa_mean <= cfg.ospa.c for row in summary.rows)
