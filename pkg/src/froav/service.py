"""HTTP API exposing the platform to the UI and to scripts.

Two token classes: the admin token (FROAV_ADMIN_TOKEN environment variable)
covers ingestion, runs, and analysis; reviewer bearer tokens (provisioned by
the admin CLI) cover feedback submission and read-only report access. Every
non-2xx response body is a well-formed ApiError: {"status", "code",
"message"}.

Run execution is asynchronous: POST /runs returns 202 with a run_id to poll
at GET /runs/{run_id}. POST /runs honors an Idempotency-Key header; reusing
a key returns the original run_id instead of launching a second run.
"""

from __future__ import annotations

import logging
import os
import threading
from pathlib import Path

from fastapi import Depends, FastAPI, Header, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import analysis, feedback
from .canonical import new_id
from .config import ADMIN_TOKEN_ENV, UI_DIR_ENV, Platform
from .dims import DIMENSIONS
from .errors import AuthFailed, FroavError, UnknownEntity
from .ingest import chunk_text, extract_text, make_document
from .nodes import build_engine
from .storage import Store
from .workflow import WorkflowDef

logger = logging.getLogger(__name__)


class DocumentIn(BaseModel):
    text: str
    source_uri: str = ""
    metadata: dict[str, str] = Field(default_factory=dict)
    format: str = "plain"


class RunIn(BaseModel):
    workflow_id: str
    inputs: dict = Field(default_factory=dict)


class FeedbackIn(BaseModel):
    dimension: str
    score: int
    comment: str = ""


def api_error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"status": status, "code": code, "message": message},
    )


class RunManager:
    """Background run execution with idempotency-key dedup."""

    def __init__(self, platform: Platform):
        self.platform = platform
        self._lock = threading.Lock()
        self._launched: set[str] = set()
        self._idempotency: dict[str, str] = {}

    def launch(self, defn: WorkflowDef, inputs: dict, idempotency_key: str | None) -> str:
        with self._lock:
            if idempotency_key and idempotency_key in self._idempotency:
                return self._idempotency[idempotency_key]
            run_id = new_id()
            self._launched.add(run_id)
            if idempotency_key:
                self._idempotency[idempotency_key] = run_id

        self.platform.register_workflow(defn)
        for wf in self.platform.workflows.values():
            self.platform.entities.put("workflow", wf.id, wf.to_payload())
        engine = build_engine(self.platform)

        def runner():
            try:
                engine.execute(defn, inputs, run_id=run_id)
            except Exception:
                logger.exception("run %s crashed", run_id)

        threading.Thread(target=runner, name=f"run-{run_id[:8]}", daemon=True).start()
        return run_id

    def status(self, run_id: str) -> dict | None:
        trace = self.platform.entities.get("trace", run_id)
        if trace is not None:
            return trace
        with self._lock:
            if run_id in self._launched:
                return {"run_id": run_id, "status": "running", "events": []}
        return None


def create_app(platform: Platform) -> FastAPI:
    app = FastAPI(title="froav", docs_url=None, redoc_url=None)
    runs = RunManager(platform)
    entities: Store = platform.entities

    # -- auth -----------------------------------------------------------------

    def bearer_token(authorization: str | None) -> str:
        if not authorization or not authorization.startswith("Bearer "):
            return ""
        return authorization[len("Bearer "):]

    def require_admin(authorization: str | None = Header(default=None)) -> None:
        admin_token = os.environ.get(ADMIN_TOKEN_ENV)
        token = bearer_token(authorization)
        if not admin_token or token != admin_token:
            raise AuthFailed("missing or invalid admin token")

    def reviewer_token(authorization: str | None = Header(default=None)) -> str:
        token = bearer_token(authorization)
        feedback.authenticate(entities, token)  # fail fast with 401 before touching the body
        return token

    def require_read(authorization: str | None = Header(default=None)) -> None:
        admin_token = os.environ.get(ADMIN_TOKEN_ENV)
        token = bearer_token(authorization)
        if admin_token and token == admin_token:
            return
        feedback.authenticate(entities, token)

    # -- error mapping -----------------------------------------------------------

    @app.exception_handler(FroavError)
    async def handle_domain_error(request: Request, exc: FroavError):
        return api_error(exc.http_status, exc.code, exc.message)

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(request: Request, exc: RequestValidationError):
        return api_error(422, "schema_violation", str(exc.errors()[:3]))

    @app.exception_handler(StarletteHTTPException)
    async def handle_http_error(request: Request, exc: StarletteHTTPException):
        code = "unknown_entity" if exc.status_code == 404 else "http_error"
        return api_error(exc.status_code, code, str(exc.detail))

    @app.exception_handler(Exception)
    async def handle_unexpected(request: Request, exc: Exception):
        logger.exception("unhandled error on %s", request.url.path)
        return api_error(500, "internal_error", f"{type(exc).__name__}")

    # -- routes -------------------------------------------------------------------

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/documents", status_code=201)
    def post_document(doc: DocumentIn, _: None = Depends(require_admin)):
        text = extract_text(doc.text.encode("utf-8"), doc.format, platform.config.extractor)
        document = make_document(text, doc.source_uri, doc.metadata)
        chunks = chunk_text(document, platform.config.chunking)
        items = [("document", document.id, document.to_payload())]
        items.extend(("chunk", c.id, c.to_payload()) for c in chunks)
        entities.put_many(items)
        return {"document_id": document.id, "chunk_count": len(chunks)}

    @app.get("/documents/{document_id}")
    def get_document(document_id: str, _: None = Depends(require_read)):
        payload = entities.get("document", document_id)
        if payload is None:
            raise UnknownEntity(f"unknown document {document_id!r}")
        return {"document": payload}

    @app.post("/runs", status_code=202)
    def post_run(
        run: RunIn,
        _: None = Depends(require_admin),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ):
        defn = platform.workflows.get(run.workflow_id)
        if defn is None:
            stored = entities.get("workflow", run.workflow_id)
            if stored is None:
                raise UnknownEntity(f"unknown workflow {run.workflow_id!r}")
            defn = WorkflowDef.from_dict(stored)
        run_id = runs.launch(defn, run.inputs, idempotency_key)
        return {"run_id": run_id}

    @app.get("/runs/{run_id}")
    def get_run(run_id: str, _: None = Depends(require_admin)):
        trace = runs.status(run_id)
        if trace is None:
            raise UnknownEntity(f"unknown run {run_id!r}")
        return trace

    @app.get("/reports")
    def list_reports(
        since: str | None = None,
        limit: int = 50,
        _: None = Depends(require_read),
    ):
        reports = entities.query(
            "report", created_at_from=since, order="created_at", limit=limit
        )
        return {"reports": reports}

    @app.get("/reports/{report_id}")
    def get_report(report_id: str, _: None = Depends(require_read)):
        payload = entities.get("report", report_id)
        if payload is None:
            raise UnknownEntity(f"unknown report {report_id!r}")
        context = []
        for chunk_id in payload["context_chunk_ids"]:
            chunk = entities.get("chunk", chunk_id)
            if chunk is not None:
                context.append(chunk)
        return {"report": payload, "context": context}

    @app.get("/reports/{report_id}/judgments")
    def get_judgments(report_id: str, _: None = Depends(require_read)):
        if not entities.exists("report", report_id):
            raise UnknownEntity(f"unknown report {report_id!r}")
        verdicts = entities.query("verdict", filter={"report_id": report_id})
        consensus = entities.query("consensus", filter={"report_id": report_id})
        by_dim = {c["dimension"]: c for c in consensus}
        dimensions = []
        for name in DIMENSIONS:
            dimensions.append(
                {
                    "dimension": name,
                    "consensus": by_dim.get(name),
                    "verdicts": [v for v in verdicts if v["dimension"] == name],
                }
            )
        return {"report_id": report_id, "dimensions": dimensions}

    @app.post("/reports/{report_id}/feedback", status_code=201)
    def post_feedback(
        report_id: str,
        body: FeedbackIn,
        token: str = Depends(reviewer_token),
    ):
        record = feedback.submit_feedback(
            entities,
            reviewer_token=token,
            report_id=report_id,
            dimension=body.dimension,
            score=body.score,
            comment=body.comment,
        )
        return {"feedback": record.to_payload()}

    @app.get("/reports/{report_id}/feedback")
    def get_feedback(report_id: str, _: None = Depends(require_read)):
        records = feedback.list_feedback(entities, report_id)
        return {"report_id": report_id, "feedback": [r.to_payload() for r in records]}

    @app.get("/analysis/correlation")
    def get_correlation(dimension: str, _: None = Depends(require_admin)):
        return analysis.correlation_report(dimension, entities).to_payload()

    @app.get("/analysis/judge-bias")
    def get_judge_bias(_: None = Depends(require_admin)):
        return {"rows": analysis.judge_bias(entities)}

    ui_dir = os.environ.get(UI_DIR_ENV)
    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def serve(platform: Platform, bind: str) -> None:
    import uvicorn

    host, _, port = bind.partition(":")
    uvicorn.run(create_app(platform), host=host or "127.0.0.1", port=int(port or 8800))
