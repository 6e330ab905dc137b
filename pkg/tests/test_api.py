import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from aida.api import ApiConfig, create_app


@pytest.fixture()
def client(tmp_path):
    app = create_app(ApiConfig(data_dir=tmp_path / "sessions"))
    with TestClient(app) as client:
        yield client
    app.state.manager.close_all()


def create_session(client, environment="table1", seed=7):
    resp = client.post("/sessions", json={"environment": environment, "seed": seed})
    assert resp.status_code == 201
    return resp.json()["session_id"]


class TestSessionLifecycle:
    def test_create_and_initial_state(self, client):
        sid = create_session(client, seed=7)
        state = client.get(f"/sessions/{sid}").json()
        assert state["frame_index"] == 0
        assert state["environment"] == "table1"

    def test_duplicate_creation_distinct_ids(self, client):
        a = create_session(client)
        b = create_session(client)
        assert a != b

    def test_unknown_environment_rejected(self, client):
        resp = client.post("/sessions", json={"environment": "xyz", "seed": 1})
        assert resp.status_code == 400
        assert "unknown_environment" in json.dumps(resp.json())

    def test_unknown_session_404(self, client):
        assert client.post("/sessions/nope/next").status_code == 404
        assert client.get("/sessions/nope/bfe").status_code == 404


class TestHappyPath:
    def test_full_scripted_flow(self, client):
        sid = create_session(client, seed=3)
        frame = client.post(f"/sessions/{sid}/next")
        assert frame.status_code == 200
        payload = frame.json()
        assert payload["frame_index"] == 1
        assert abs(sum(payload["belief"]) - 1.0) < 1e-9
        assert len(payload["bfe"]) == len(payload["model_names"])

        wave = client.get(payload["waveforms"]["output"])
        assert wave.status_code == 200
        assert wave.headers["x-sample-rate"] == "8000"
        pcm = np.frombuffer(wave.content, dtype="<i2")
        assert pcm.shape[0] == int(wave.headers["x-length"]) == 100

        meta = client.get(payload["waveforms"]["output"] + "/meta").json()
        assert meta == {
            "sample_rate": 8000,
            "length": 100,
            "kind": "output",
            "encoding": "pcm16-le",
        }

        appr = client.post(f"/sessions/{sid}/appraisal", json={"r": 0})
        assert appr.status_code == 200
        proposal = appr.json()["proposal"]
        assert len(proposal) == 2
        assert all(0.0 <= g <= 1.0 for g in proposal)

        efe = client.get(f"/sessions/{sid}/efe", params={"resolution": 9})
        assert efe.status_code == 200
        body = efe.json()
        assert body["resolution"] == 9
        assert len(body["efe"]) == 81

        bfe = client.get(f"/sessions/{sid}/bfe")
        assert bfe.status_code == 200
        assert bfe.json()["map_index"] == payload["map_index"]

    def test_appraisal_before_frame_409(self, client):
        sid = create_session(client)
        resp = client.post(f"/sessions/{sid}/appraisal", json={"r": 1})
        assert resp.status_code == 409

    def test_invalid_appraisal_422(self, client):
        sid = create_session(client)
        client.post(f"/sessions/{sid}/next")
        resp = client.post(f"/sessions/{sid}/appraisal", json={"r": 3})
        assert resp.status_code == 422

    def test_optimize_guard_and_success(self, client):
        sid = create_session(client, seed=5)
        client.post(f"/sessions/{sid}/next")
        resp = client.post(f"/sessions/{sid}/optimize")
        assert resp.status_code == 409
        # feed both classes, then optimization must return parameters
        client.post(f"/sessions/{sid}/appraisal", json={"r": 0})
        client.post(f"/sessions/{sid}/appraisal", json={"r": 1})
        resp = client.post(f"/sessions/{sid}/optimize")
        assert resp.status_code == 200
        body = resp.json()
        assert 0.1 <= body["sigma"] <= 1.0 and 0.1 <= body["l"] <= 1.0


class TestEfeEquivalence:
    def test_api_field_matches_module_field(self, client, tmp_path):
        sid = create_session(client, seed=9)
        client.post(f"/sessions/{sid}/next")
        client.post(f"/sessions/{sid}/appraisal", json={"r": 0})
        client.post(f"/sessions/{sid}/appraisal", json={"r": 1})
        body = client.get(f"/sessions/{sid}/efe", params={"resolution": 11}).json()

        from aida.agent import CandidateGrid, GoalPrior, efe_field

        handle = client.app.state.manager.get(sid)
        session = handle.session
        ctx = session.contexts[body["context"]]
        field = efe_field(
            ctx.dataset, ctx.params, CandidateGrid(resolution=(11, 11)), GoalPrior(0.8)
        )
        np.testing.assert_allclose(np.asarray(body["efe"]), field.efe, atol=1e-12)

    def test_resolution_clamped(self, client):
        sid = create_session(client)
        client.post(f"/sessions/{sid}/next")
        body = client.get(f"/sessions/{sid}/efe", params={"resolution": 3}).json()
        assert body["resolution"] == 5
        body = client.get(f"/sessions/{sid}/efe", params={"resolution": 500}).json()
        assert body["resolution"] == 101


class TestEventPersistence:
    def test_mutations_persist_events(self, client, tmp_path):
        sid = create_session(client, seed=2)
        log_path = client.app.state.manager.data_dir / f"{sid}.jsonl"
        counts = [len(log_path.read_text().splitlines())]
        client.post(f"/sessions/{sid}/next")
        counts.append(len(log_path.read_text().splitlines()))
        client.post(f"/sessions/{sid}/appraisal", json={"r": 1})
        counts.append(len(log_path.read_text().splitlines()))
        assert counts[1] > counts[0]
        assert counts[2] > counts[1]

    def test_health(self, client):
        assert client.get("/healthz").json() == {"status": "ok"}
