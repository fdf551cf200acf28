"""HTTP layer: routes, rate limiting, statistics, error bodies."""

import json
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

import pytest
from fastapi.testclient import TestClient

from cqdash.cli import build_state, load_config
from cqdash.errors import StartupError
from cqdash.service import RateLimiter, build_app, compute_statistics

from conftest import decade_transcript


@pytest.fixture(scope="module")
def service():
    state, servers = build_state(
        fixture_endpoint=True, mock_transcript=decade_transcript(200)
    )
    client = TestClient(build_app(state))
    yield client, state
    for server in servers:
        server.stop()


MOCK = {"provider": "mock", "model": "mock-model"}


# -- rate limiter unit behavior ----------------------------------------------

def test_limiter_boundary_25_allowed_26_denied():
    limiter = RateLimiter(limit=25, default_model="m")
    now = datetime(2026, 8, 23, 12, 0, tzinfo=timezone.utc)
    decisions = [limiter.check_and_consume("k", "m", now) for _ in range(26)]
    assert decisions[24].allowed and decisions[24].remaining == 0
    assert not decisions[25].allowed
    assert decisions[25].retry_after == 12 * 3600


def test_limiter_window_rolls_at_utc_midnight():
    limiter = RateLimiter(limit=1, default_model="m")
    day1 = datetime(2026, 8, 23, 23, 59, tzinfo=timezone.utc)
    day2 = datetime(2026, 8, 24, 0, 0, 1, tzinfo=timezone.utc)
    assert limiter.check_and_consume("k", "m", day1).allowed
    assert not limiter.check_and_consume("k", "m", day1).allowed
    assert limiter.check_and_consume("k", "m", day2).allowed


def test_limiter_ignores_non_default_model():
    limiter = RateLimiter(limit=1, default_model="m")
    for _ in range(10):
        assert limiter.check_and_consume("k", "other", None).allowed


def test_limiter_exact_under_concurrency():
    limiter = RateLimiter(limit=25, default_model="m")
    with ThreadPoolExecutor(32) as ex:
        decisions = list(ex.map(lambda _: limiter.check_and_consume("k", "m"), range(40)))
    assert sum(d.allowed for d in decisions) == 25
    assert sum(not d.allowed for d in decisions) == 15


# -- routes -------------------------------------------------------------------

def test_use_case_listing(service):
    client, _ = service
    body = client.get("/use-cases").json()
    assert {(u["use_case_id"], u["question_count"]) for u in body} == {
        ("kg-empire", 16), ("nlp4re-id-card", 10)
    }


def test_schema_and_questions_endpoints(service):
    client, state = service
    schema = client.get("/use-cases/kg-empire/schema").json()
    assert schema["fingerprint"] == state.schemas.get("kg-empire").fingerprint
    questions = client.get("/use-cases/nlp4re-id-card/questions").json()
    assert [q["index"] for q in questions] == list(range(1, 11))
    assert client.get("/use-cases/ghost/schema").status_code == 404


def test_curated_run_and_history(service):
    client, _ = service
    run = client.post("/use-cases/kg-empire/questions/12/run", json={}).json()
    assert run["status"] == "complete"
    sid = run["session_id"]
    history = client.get(f"/sessions/{sid}/history").json()
    assert [e["kind"] for e in history] == ["question-submitted", "outcome"]
    eid = history[0]["event_id"]
    toggled = client.post(f"/sessions/{sid}/events/{eid}/retained", json={"retained": False})
    assert toggled.status_code == 200
    refreshed = client.get(f"/sessions/{sid}/history").json()
    assert refreshed[0]["retained"] is False
    assert len(refreshed) == len(history)


def test_custom_run_refine_and_bundle_round_trip(service):
    client, _ = service
    run = client.post("/use-cases/kg-empire/custom/run",
                      json={"question": "Number of empirical studies per decade", **MOCK}).json()
    assert run["status"] == "complete"
    sid, ref = run["session_id"], run["outcome_ref"]

    refined = client.post(f"/sessions/{sid}/refine", json={
        "outcome_ref": ref, "instruction": "Manual text.",
        "target": "interpretation", "mode": "manual"}).json()
    assert refined["interpretation"]["summary"] == "Manual text."

    export = client.get(f"/sessions/{sid}/export/{ref}")
    assert ".cqbundle.json" in export.headers["content-disposition"]
    imported = client.post("/import", content=export.content)
    assert imported.status_code == 200
    assert imported.json()["session_id"] != sid

    tampered = export.json()
    tampered["dataset"]["data"]["studies"][0] = 999
    response = client.post("/import", content=json.dumps(tampered))
    assert response.status_code == 409
    assert response.json()["code"] == "integrity"


def test_rate_limit_route_behavior(service):
    client, state = service
    state.limiter._counts = {}
    payload = {"question": "decades", "provider": "mock"}  # default model -> limited
    codes = [client.post("/use-cases/kg-empire/custom/run", json=payload).status_code
             for _ in range(26)]
    assert codes.count(429) == 1 and codes[-1] == 429
    denied = client.post("/use-cases/kg-empire/custom/run", json=payload)
    assert "retry-after" in denied.headers
    assert denied.json()["code"] == "rate-limit"
    # non-default model is unlimited by this limiter
    ok = client.post("/use-cases/kg-empire/custom/run",
                     json={"question": "decades", **MOCK})
    assert ok.status_code == 200
    state.limiter._counts = {}


def test_trusted_proxy_header_keys_clients(service):
    client, state = service
    state.limiter._counts = {}
    state.trusted_proxy = True
    try:
        payload = {"question": "decades", "provider": "mock"}
        headers = {"X-Forwarded-For": "10.0.0.1"}
        for _ in range(25):
            assert client.post("/use-cases/kg-empire/custom/run",
                               json=payload, headers=headers).status_code == 200
        assert client.post("/use-cases/kg-empire/custom/run",
                           json=payload, headers=headers).status_code == 429
        # a different forwarded client still has quota
        other = client.post("/use-cases/kg-empire/custom/run",
                            json=payload, headers={"X-Forwarded-For": "10.0.0.2"})
        assert other.status_code == 200
    finally:
        state.trusted_proxy = False
        state.limiter._counts = {}


def test_statistics_counts(service):
    client, state = service
    before = client.get("/statistics").json()
    kg = before["use_cases"]["kg-empire"]
    assert kg["curated_questions"] == 16
    assert before["use_cases"]["nlp4re-id-card"]["curated_questions"] == 10
    client.post("/use-cases/kg-empire/questions/1/run", json={})
    after = client.get("/statistics").json()
    assert after["use_cases"]["kg-empire"]["curated_executions"] == kg["curated_executions"] + 1


def test_statistics_deterministic_on_frozen_store(service):
    _, state = service
    first = compute_statistics(state.catalogs, state.sessions, "t")
    second = compute_statistics(state.catalogs, state.sessions, "t")
    assert first == second


def test_api_description_in_sync_with_routes(service):
    client, _ = service
    description = client.get("/api-description").json()
    described = {(r["method"], r["path"]) for r in description["routes"]}
    app = client.app
    served = set()
    for route in app.routes:
        path = getattr(route, "path", "")
        for method in (getattr(route, "methods", None) or ()):
            if method != "HEAD" and not path.startswith(("/openapi", "/docs", "/redoc")):
                served.add((method, path))
    assert served == described


def test_unknown_route_structured_404(service):
    client, _ = service
    response = client.get("/definitely/not/here")
    assert response.status_code == 404
    body = response.json()
    assert body["code"] == "not-found" and "correlation_id" in body


def test_error_body_carries_correlation_id(service):
    client, _ = service
    response = client.post("/use-cases/kg-empire/questions/99/run", json={})
    assert response.status_code == 404
    assert set(response.json()) >= {"code", "message", "correlation_id"}


# -- startup -----------------------------------------------------------------

def test_startup_error_names_missing_path(tmp_path):
    with pytest.raises(StartupError, match="schemas"):
        build_state(data_dir=str(tmp_path / "nowhere"))


def test_startup_requires_endpoint_configuration():
    with pytest.raises(StartupError, match="endpoint"):
        build_state(fixture_endpoint=False)


def test_config_file_errors(tmp_path):
    with pytest.raises(StartupError, match="not found"):
        load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(StartupError, match="valid JSON"):
        load_config(str(bad))
