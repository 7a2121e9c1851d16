import pytest
from fastapi.testclient import TestClient

from app.config.settings import settings
from app.main import app

PREFIX = settings.normalized_api_prefix


@pytest.fixture
def client(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "results_dir", str(tmp_path))
    with TestClient(app) as c:
        yield c


def test_health(client):
    resp = client.get(f"{PREFIX}/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "ok"
    assert body["version"]


def test_root_lists_endpoints(client):
    body = client.get("/").json()
    assert body["endpoints"]["ospa"] == f"{PREFIX}/ospa"


def test_ospa_endpoint(client):
    resp = client.post(f"{PREFIX}/ospa", json={"estimates": [[0, 0]], "truth": [[3, 4]]})
    assert resp.status_code == 200
    assert resp.json()["ospa"] == pytest.approx(5.0)

    resp = client.post(f"{PREFIX}/ospa", json={"estimates": [], "truth": [[1, 1]], "c": 7.0})
    assert resp.json() == {"ospa": 7.0, "localization": 0.0, "cardinality": 7.0}


def test_ospa_rejects_bad_cutoff(client):
    resp = client.post(f"{PREFIX}/ospa", json={"estimates": [], "truth": [], "c": -1.0})
    assert resp.status_code == 422


def test_experiment_lifecycle(client, small_run_config):
    assert client.get(f"{PREFIX}/experiments/tiny").status_code == 404

    payload = {"name": "tiny", "config": small_run_config.model_dump(mode="json")}
    resp = client.post(f"{PREFIX}/experiments", json=payload)
    assert resp.status_code == 202
    assert resp.json()["n_runs"] == 1
    assert resp.json()["filter"] == "ttombp"

    # TestClient runs background tasks before returning
    resp = client.get(f"{PREFIX}/experiments/tiny")
    assert resp.status_code == 200
    rows = resp.json()
    assert len(rows) == small_run_config.scenario.n_steps
    assert rows[0]["k"] == 1


def test_experiment_config_is_validated(client):
    resp = client.post(f"{PREFIX}/experiments", json={"name": "bad", "config": {"n_runz": 3}})
    assert resp.status_code == 422


def test_experiment_name_is_validated(client):
    assert client.post(f"{PREFIX}/experiments", json={"name": "../up"}).status_code == 422
    assert client.get(f"{PREFIX}/experiments/a.b").status_code == 400
