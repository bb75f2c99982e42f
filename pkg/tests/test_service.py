from __future__ import annotations

import json
import time
from importlib import resources

import pytest
from fastapi.testclient import TestClient
from jsonschema import Draft202012Validator

from conftest import FIXTURE_DOCS
from froav.config import Platform, load_config
from froav.feedback import add_reviewer
from froav.service import create_app

ADMIN_TOKEN = "test-admin-token"

_validators: dict[str, Draft202012Validator] = {}


def check_schema(name: str, payload: dict) -> None:
    if name not in _validators:
        text = resources.files("froav").joinpath(f"schemas/api/{name}.schema.json").read_text()
        _validators[name] = Draft202012Validator(json.loads(text))
    errors = list(_validators[name].iter_errors(payload))
    assert not errors, f"{name} schema violations: {[e.message for e in errors[:3]]}"


def check_error(resp) -> dict:
    assert resp.status_code >= 400
    body = resp.json()
    check_schema("api_error", body)
    assert body["status"] == resp.status_code
    return body


@pytest.fixture
def service(data_dir, monkeypatch):
    monkeypatch.setenv("FROAV_ADMIN_TOKEN", ADMIN_TOKEN)
    platform = Platform(load_config(None))
    reviewer, token = add_reviewer(platform.entities, "Dana")
    client = TestClient(create_app(platform), raise_server_exceptions=False)
    yield client, platform, token
    platform.close()


def admin(extra: dict | None = None) -> dict:
    headers = {"Authorization": f"Bearer {ADMIN_TOKEN}"}
    headers.update(extra or {})
    return headers


def reviewer_headers(token: str) -> dict:
    return {"Authorization": f"Bearer {token}"}


def wait_for_run(client, run_id: str, timeout_s: float = 20.0) -> dict:
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        resp = client.get(f"/runs/{run_id}", headers=admin())
        assert resp.status_code == 200
        trace = resp.json()
        check_schema("run_trace", trace)
        if trace["status"] != "running":
            return trace
        time.sleep(0.05)
    raise AssertionError(f"run {run_id} did not finish within {timeout_s}s")


def ingest_fixtures(client) -> list[str]:
    ids = []
    for doc in FIXTURE_DOCS:
        resp = client.post(
            "/documents",
            json={
                "text": doc["text"],
                "source_uri": doc["source_uri"],
                "metadata": doc["metadata"],
            },
            headers=admin(),
        )
        assert resp.status_code == 201, resp.text
        body = resp.json()
        check_schema("document_created", body)
        ids.append(body["document_id"])
    return ids


def launch_run(client, query: str, document_ids: list[str], key: str | None = None) -> str:
    headers = admin({"Idempotency-Key": key} if key else None)
    resp = client.post(
        "/runs",
        json={
            "workflow_id": "rag_judge",
            "inputs": {"query": query, "document_ids": document_ids},
        },
        headers=headers,
    )
    assert resp.status_code == 202, resp.text
    body = resp.json()
    check_schema("run_accepted", body)
    return body["run_id"]


class TestHealthz:
    def test_unauthenticated_ok(self, service):
        client, _, _ = service
        resp = client.get("/healthz")
        assert resp.status_code == 200
        body = resp.json()
        assert body == {"status": "ok"}
        check_schema("healthz", body)


class TestScriptedSession:
    def test_full_session_all_2xx(self, service):
        client, platform, token = service

        # ingest -> run -> poll
        doc_ids = ingest_fixtures(client)
        run_a = launch_run(client, "How is the cash flow situation?", doc_ids)
        trace_a = wait_for_run(client, run_a)
        assert trace_a["status"] == "succeeded"
        run_b = launch_run(client, "What are the main risks?", doc_ids)
        trace_b = wait_for_run(client, run_b)
        assert trace_b["status"] == "succeeded"

        # reports listed and readable
        resp = client.get("/reports", headers=reviewer_headers(token))
        assert resp.status_code == 200
        body = resp.json()
        check_schema("report_list", body)
        assert len(body["reports"]) == 2
        report_ids = [r["id"] for r in body["reports"]]

        resp = client.get(f"/reports/{report_ids[0]}", headers=reviewer_headers(token))
        assert resp.status_code == 200
        detail = resp.json()
        check_schema("report_detail", detail)
        assert len(detail["context"]) == len(detail["report"]["context_chunk_ids"])

        # judgments: 3 verdicts + consensus per dimension
        for rid in report_ids:
            resp = client.get(f"/reports/{rid}/judgments", headers=reviewer_headers(token))
            assert resp.status_code == 200
            judgments = resp.json()
            check_schema("judgments", judgments)
            for dim in judgments["dimensions"]:
                assert dim["consensus"] is not None
                assert len(dim["verdicts"]) == 3

        # feedback on every dimension of both reports
        for rid in report_ids:
            resp = client.get(f"/reports/{rid}/judgments", headers=reviewer_headers(token))
            for dim in resp.json()["dimensions"]:
                consensus_score = dim["consensus"]["score"]
                human = max(1, min(10, round(consensus_score) - 1))
                post = client.post(
                    f"/reports/{rid}/feedback",
                    json={"dimension": dim["dimension"], "score": human, "comment": "ok"},
                    headers=reviewer_headers(token),
                )
                assert post.status_code == 201, post.text
                check_schema("feedback_created", post.json())

        resp = client.get(f"/reports/{report_ids[0]}/feedback", headers=reviewer_headers(token))
        assert resp.status_code == 200
        listing = resp.json()
        check_schema("feedback_list", listing)
        assert len(listing["feedback"]) == 4

        # correlation across the two judged + reviewed reports
        resp = client.get(
            "/analysis/correlation", params={"dimension": "Reliability"}, headers=admin()
        )
        assert resp.status_code == 200
        correlation = resp.json()
        check_schema("correlation", correlation)
        assert correlation["n"] >= 2

        resp = client.get("/analysis/judge-bias", headers=admin())
        assert resp.status_code == 200
        check_schema("judge_bias", resp.json())

        # provenance holds across everything the session created
        assert platform.entities.check_integrity() == []


class TestIdempotency:
    def test_duplicate_key_returns_original_run(self, service):
        client, _, _ = service
        doc_ids = ingest_fixtures(client)
        first = launch_run(client, "q", doc_ids, key="abc-123")
        second = launch_run(client, "q", doc_ids, key="abc-123")
        assert first == second
        third = launch_run(client, "q", doc_ids, key="other-key")
        assert third != first


class TestRunDefaults:
    def test_run_without_document_ids_uses_whole_corpus(self, service):
        client, platform, _ = service
        ingest_fixtures(client)
        resp = client.post(
            "/runs",
            json={"workflow_id": "rag_judge", "inputs": {"query": "how is cash flow?"}},
            headers=admin(),
        )
        assert resp.status_code == 202
        trace = wait_for_run(client, resp.json()["run_id"])
        assert trace["status"] == "succeeded"
        report = platform.entities.query("report")[-1]
        chunk = platform.entities.get("chunk", report["context_chunk_ids"][0])
        assert platform.entities.get("document", chunk["document_id"]) is not None


class TestErrorPaths:
    def test_missing_token_on_admin_route(self, service):
        client, _, _ = service
        resp = client.post("/documents", json={"text": "x"})
        assert resp.status_code == 401
        assert check_error(resp)["code"] == "auth_failed"

    def test_reviewer_token_rejected_on_admin_route(self, service):
        client, _, token = service
        resp = client.post("/documents", json={"text": "x"}, headers=reviewer_headers(token))
        assert resp.status_code == 401
        check_error(resp)

    def test_unknown_report_feedback_404(self, service):
        client, _, token = service
        resp = client.post(
            "/reports/nope/feedback",
            json={"dimension": "Reliability", "score": 5, "comment": ""},
            headers=reviewer_headers(token),
        )
        assert resp.status_code == 404
        assert check_error(resp)["code"] == "unknown_entity"

    def test_bad_score_422(self, service):
        client, platform, token = service
        doc_ids = ingest_fixtures(client)
        run_id = launch_run(client, "q", doc_ids)
        wait_for_run(client, run_id)
        report_id = platform.entities.query("report")[0]["id"]
        resp = client.post(
            f"/reports/{report_id}/feedback",
            json={"dimension": "Reliability", "score": 0, "comment": ""},
            headers=reviewer_headers(token),
        )
        assert resp.status_code == 422
        check_error(resp)

    def test_bad_dimension_422(self, service):
        client, platform, token = service
        doc_ids = ingest_fixtures(client)
        run_id = launch_run(client, "q", doc_ids)
        wait_for_run(client, run_id)
        report_id = platform.entities.query("report")[0]["id"]
        resp = client.post(
            f"/reports/{report_id}/feedback",
            json={"dimension": "Vibes", "score": 5, "comment": ""},
            headers=reviewer_headers(token),
        )
        assert resp.status_code == 422
        assert check_error(resp)["code"] == "invalid_dimension"

    def test_unknown_run_404(self, service):
        client, _, _ = service
        resp = client.get("/runs/doesnotexist", headers=admin())
        assert resp.status_code == 404
        check_error(resp)

    def test_unknown_workflow_404(self, service):
        client, _, _ = service
        resp = client.post(
            "/runs", json={"workflow_id": "ghost", "inputs": {}}, headers=admin()
        )
        assert resp.status_code == 404
        check_error(resp)

    def test_malformed_body_422(self, service):
        client, _, _ = service
        resp = client.post("/documents", json={"nope": True}, headers=admin())
        assert resp.status_code == 422
        assert check_error(resp)["code"] == "schema_violation"

    def test_unknown_path_404_is_api_error(self, service):
        client, _, _ = service
        resp = client.get("/not-a-route")
        assert resp.status_code == 404
        check_error(resp)

    def test_correlation_without_data_422(self, service):
        client, _, _ = service
        resp = client.get(
            "/analysis/correlation", params={"dimension": "Reliability"}, headers=admin()
        )
        assert resp.status_code == 422
        assert check_error(resp)["code"] == "insufficient_data"

    def test_empty_document_422(self, service):
        client, _, _ = service
        resp = client.post("/documents", json={"text": ""}, headers=admin())
        assert resp.status_code == 422
        check_error(resp)


class TestDocumentRoutes:
    def test_document_round_trip(self, service):
        client, _, token = service
        doc_ids = ingest_fixtures(client)
        resp = client.get(f"/documents/{doc_ids[0]}", headers=reviewer_headers(token))
        assert resp.status_code == 200
        body = resp.json()
        check_schema("document_detail", body)
        assert body["document"]["id"] == doc_ids[0]

    def test_reingest_same_content_same_id(self, service):
        client, _, _ = service
        first = ingest_fixtures(client)
        second = ingest_fixtures(client)
        assert first == second
