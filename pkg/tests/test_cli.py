import json

import pytest

from app.cli import load_config, main
from app.utils import file_utils


@pytest.fixture
def config_file(tmp_path, small_run_config):
    path = tmp_path / "cfg.json"
    path.write_text(small_run_config.model_dump_json())
    return path


def test_overrides_replace_config_values(config_file):
    cfg = load_config(str(config_file), runs=3, seed=11, filter_kind="tmb", out="x")
    assert (cfg.n_runs, cfg.base_seed, cfg.filter.value, cfg.output_dir) == (3, 11, "tmb", "x")
    assert cfg.scenario.n_steps == 8


def test_experiment_command(config_file, tmp_path, capsys):
    out = tmp_path / "exp"
    assert main(["experiment", "--config", str(config_file), "--out", str(out)]) == 0
    assert (out / "mospa.csv").exists()
    assert "mospa.csv" in capsys.readouterr().out


def test_unknown_config_key_is_rejected(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"n_runz": 3}))
    assert main(["experiment", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_config_file_is_an_io_error(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 1


def test_bad_filter_name_exits_with_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["track", "--filter", "kalman"])
    assert exc.value.code == 2


def test_simulate_track_evaluate_pipeline(config_file, tmp_path, capsys):
    data, track, scores = tmp_path / "data", tmp_path / "track", tmp_path / "scores"
    assert main(["simulate", "--config", str(config_file), "--out", str(data)]) == 0
    assert len(list((data / "frames").glob("frame_*.csv"))) == 8

    assert main(["track", "--config", str(config_file), "--input", str(data), "--out", str(track)]) == 0
    records = list(file_utils.read_jsonl(track / "estimates.jsonl"))
    assert [r["k"] for r in records] == list(range(1, 9))

    assert main([
        "evaluate", "--config", str(config_file),
        "--truth", str(data / "truth.jsonl"),
        "--estimates", str(track / "estimates.jsonl"),
        "--out", str(scores),
    ]) == 0
    assert "mean_ospa=" in capsys.readouterr().out
    scored = list(file_utils.read_jsonl(scores / "ospa.jsonl"))
    # re-scoring reproduces what the tracker wrote
    assert [s["ospa"] for s in scored] == pytest.approx([r["ospa"] for r in records])
