import pytest

import app as web


@pytest.fixture
def client(ledger_db):
    web.app.config["TESTING"] = True
    with web.app.test_client() as c:
        yield c


def test_runs_listing(client, ledger_db):
    run_id = ledger_db.save_run({"command": "solve", "exit_code": 0, "checks": [{"name": "x", "passed": True}]})
    runs = client.get("/api/runs").get_json()
    assert [r["id"] for r in runs] == [run_id]
    detail = client.get(f"/api/runs/{run_id}").get_json()
    assert detail["checks"][0]["name"] == "x"


def test_missing_run(client):
    resp = client.get("/api/runs/999")
    assert resp.status_code == 404
    assert "introuvable" in resp.get_json()["error"]


def test_check_stats(client, ledger_db):
    ledger_db.save_run({"command": "verify", "exit_code": 1, "checks": [{"name": "strata", "passed": False}]})
    stats = client.get("/api/checks/stats").get_json()
    assert stats == [{"name": "strata", "total": 1, "passed": 0, "pass_rate": 0.0}]


def test_profile(client):
    payload = client.get("/api/profiles/Psi/1?s=0.5").get_json()
    assert payload["lambda"] == pytest.approx(1.5)
    assert payload["admissible"] is True
    assert set(payload["sets"]) == {"contact", "free_boundary", "nodal", "spine"}


def test_profile_not_admissible(client):
    payload = client.get("/api/profiles/Psi/2").get_json()
    assert payload["admissible"] is False
    assert "sets" not in payload


def test_unknown_family(client):
    assert client.get("/api/profiles/Zeta/1").status_code == 400


def test_purge(client, ledger_db):
    ledger_db.save_run({"command": "solve", "exit_code": 0})
    resp = client.post("/api/admin/purge-runs", json={})
    assert resp.get_json() == {"ok": True, "deleted": 1}


def test_purge_requires_token(client, ledger_db, monkeypatch):
    monkeypatch.setattr(web, "ADMIN_TOKEN", "secret")
    ledger_db.save_run({"command": "solve", "exit_code": 0})
    assert client.post("/api/admin/purge-runs", json={"token": "nope"}).status_code == 403
    assert client.post("/api/admin/purge-runs", json={"token": "secret"}).get_json()["deleted"] == 1
