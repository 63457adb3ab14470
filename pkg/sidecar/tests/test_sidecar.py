"""Contract tests for the sidecar against the shared endpoint fixtures."""

from __future__ import annotations

import base64
import json
import math
from pathlib import Path

import jsonschema
import pytest
from fastapi.testclient import TestClient

from inference_sidecar.adapters import AdapterRegistry
from inference_sidecar.app import create_app

FIXTURES = json.loads(
    (Path(__file__).resolve().parents[2] / "schemas" / "endpoint_fixtures.json").read_text(encoding="utf-8")
)["endpoints"]

POST_ENDPOINTS = ["/embed", "/classify_frame", "/transcribe", "/regions", "/clip_score", "/detect"]


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(AdapterRegistry.stubs()))


@pytest.mark.parametrize("endpoint", POST_ENDPOINTS)
def test_valid_requests_yield_schema_conformant_responses(client, endpoint):
    spec = FIXTURES[endpoint]
    resp = client.post(endpoint, json=spec["valid_request"])
    assert resp.status_code == 200, resp.text
    jsonschema.validate(resp.json(), spec["response_schema"])


@pytest.mark.parametrize(
    "endpoint,bad",
    [(e, bad) for e in POST_ENDPOINTS for bad in FIXTURES[e].get("invalid_requests", [])],
)
def test_invalid_requests_are_rejected(client, endpoint, bad):
    resp = client.post(endpoint, json=bad)
    assert 400 <= resp.status_code < 500


def test_bad_base64_is_a_client_error(client):
    resp = client.post("/classify_frame", json={"image_b64": "not base64!!"})
    assert resp.status_code == 400


def test_healthz_schema_and_adapter_list(client):
    resp = client.get("/healthz")
    assert resp.status_code == 200
    body = resp.json()
    jsonschema.validate(body, FIXTURES["/healthz"]["response_schema"])
    assert set(body["adapters"]) == {
        "embed",
        "classify_frame",
        "transcribe",
        "regions",
        "clip_score",
        "detect",
    }
    assert body["embedding_dim"] == 16


def test_embed_is_unit_norm_and_deterministic(client):
    req = FIXTURES["/embed"]["valid_request"]
    a = client.post("/embed", json=req).json()
    b = client.post("/embed", json=req).json()
    assert a == b
    assert len(a["vector"]) == a["dim"] == 16
    norm = math.sqrt(sum(x * x for x in a["vector"]))
    assert abs(norm - 1.0) < 1e-9


def test_embed_varies_with_payload_and_kind(client):
    base = {"payload_b64": base64.b64encode(b"payload-a").decode(), "kind": "image"}
    other = {"payload_b64": base64.b64encode(b"payload-b").decode(), "kind": "image"}
    as_text = dict(base, kind="text")
    va = client.post("/embed", json=base).json()["vector"]
    vb = client.post("/embed", json=other).json()["vector"]
    vt = client.post("/embed", json=as_text).json()["vector"]
    assert va != vb
    assert va != vt


def test_clip_score_arity_matches_prompts(client):
    prompts = ["fundus photograph", "presentation slide", "portrait"]
    resp = client.post(
        "/clip_score",
        json={"image_b64": base64.b64encode(b"img").decode(), "prompts": prompts},
    )
    scores = resp.json()["scores"]
    assert len(scores) == len(prompts)
    assert all(-1.0 <= s <= 1.0 for s in scores)


def test_transcribe_clamps_to_window(client):
    req = {"audio_b64": base64.b64encode(b"audio").decode(), "start_s": 2.0, "end_s": 9.5}
    segments = client.post("/transcribe", json=req).json()["segments"]
    assert segments and all(s["start_s"] >= 2.0 and s["end_s"] <= 9.5 for s in segments)
    empty = client.post(
        "/transcribe",
        json={"audio_b64": req["audio_b64"], "start_s": 5.0, "end_s": 5.0},
    ).json()["segments"]
    assert empty == []


def test_missing_adapter_returns_503():
    partial = AdapterRegistry.stubs()
    partial.transcribe = None
    client = TestClient(create_app(partial))
    resp = client.post("/transcribe", json=FIXTURES["/transcribe"]["valid_request"])
    assert resp.status_code == 503
    assert "transcribe" not in client.get("/healthz").json()["adapters"]


def test_token_auth_guards_endpoints_but_not_healthz():
    client = TestClient(create_app(AdapterRegistry.stubs(), token="sekrit"))
    assert client.get("/healthz").status_code == 200
    denied = client.post("/embed", json=FIXTURES["/embed"]["valid_request"])
    assert denied.status_code == 401
    allowed = client.post(
        "/embed",
        json=FIXTURES["/embed"]["valid_request"],
        headers={"Authorization": "Bearer sekrit"},
    )
    assert allowed.status_code == 200
