"""HTTP API: use-case browsing, both workflows, refinement, history,
bundles, statistics, and a machine-readable route description.

Rate limiting applies only to requests using the default LLM; 25 requests
per client per UTC day, exact under concurrency. Clients are keyed by
remote address, honoring X-Forwarded-For only behind a trusted proxy.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import date, datetime, time as dtime, timezone
from typing import Optional

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .catalog import CatalogRegistry
from .errors import (
    BundleVersionError,
    CqdashError,
    DecodeError,
    EndpointStatusError,
    EndpointUnreachableError,
    IntegrityError,
    NotFoundError,
    ParseError,
    PreconditionError,
    ProviderError,
    RateLimitError,
    RefinementError,
    UnsupportedFormError,
    ValidationError,
)
from .llm.providers import DEFAULT_MODEL, DEFAULT_PROVIDER, LlmConfig, ProviderRegistry
from .pipeline import Pipeline, outcome_to_payload
from .schema import SchemaRegistry, canonical_serialization
from .sessions import (
    BUNDLE_SUFFIX,
    SessionStore,
    export_bundle,
    import_bundle,
)
from .tabular import chart_document

DEFAULT_RATE_LIMIT = 25


# ---------------------------------------------------------------------------
# rate limiting

def _seconds_to_utc_midnight(now: datetime) -> int:
    midnight = datetime.combine(now.date(), dtime(0, 0), tzinfo=timezone.utc)
    elapsed = (now - midnight).total_seconds()
    return max(1, int(86400 - elapsed))


@dataclass
class RateLimitDecision:
    allowed: bool
    remaining: int = 0
    retry_after: int = 0


class RateLimiter:
    """Per-key daily counter; only the default model consumes quota."""

    def __init__(self, limit: int = DEFAULT_RATE_LIMIT, default_model: str = DEFAULT_MODEL):
        self.limit = limit
        self.default_model = default_model
        self._lock = threading.Lock()
        self._counts: dict[str, int] = {}
        self._window: Optional[date] = None

    def check_and_consume(
        self, key: str, model_id: str, now: Optional[datetime] = None
    ) -> RateLimitDecision:
        if model_id != self.default_model:
            return RateLimitDecision(allowed=True, remaining=self.limit)
        now = now or datetime.now(timezone.utc)
        with self._lock:
            if self._window != now.date():  # window rolls at 00:00 UTC
                self._window = now.date()
                self._counts = {}
            count = self._counts.get(key, 0)
            if count >= self.limit:
                return RateLimitDecision(
                    allowed=False, retry_after=_seconds_to_utc_midnight(now)
                )
            self._counts[key] = count + 1
            return RateLimitDecision(allowed=True, remaining=self.limit - count - 1)


# ---------------------------------------------------------------------------
# statistics

def compute_statistics(
    catalogs: CatalogRegistry, sessions: SessionStore, last_reload: str
) -> dict:
    per_use_case: dict[str, dict] = {}
    for use_case_id in catalogs.use_case_ids():
        per_use_case[use_case_id] = {
            "curated_questions": len(catalogs.list_questions(use_case_id)),
            "curated_executions": 0,
            "custom_questions": 0,
            "repair_runs": 0,
            "repair_successes": 0,
            "repair_success_rate": None,
        }
    for session_id in sessions.session_ids():
        for event in sessions.events(session_id):
            if event.kind != "outcome":
                continue
            stats = per_use_case.get(event.payload.get("use_case_id"))
            if stats is None:
                continue
            if event.payload.get("question_kind") == "curated":
                stats["curated_executions"] += 1
            else:
                stats["custom_questions"] += 1
                history = event.payload.get("query_history", [])
                attempts = [h for h in history if h.get("source") == "llm"]
                if len(attempts) > 1 or event.payload.get("status") == "failed":
                    stats["repair_runs"] += 1
                    if event.payload.get("status") == "complete":
                        stats["repair_successes"] += 1
    for stats in per_use_case.values():
        if stats["repair_runs"]:
            stats["repair_success_rate"] = stats["repair_successes"] / stats["repair_runs"]
    return {"use_cases": per_use_case, "last_reload": last_reload}


# ---------------------------------------------------------------------------
# application state and request bodies

@dataclass
class AppState:
    schemas: SchemaRegistry
    catalogs: CatalogRegistry
    sessions: SessionStore
    pipeline: Pipeline
    registry: ProviderRegistry
    limiter: RateLimiter = field(default_factory=RateLimiter)
    trusted_proxy: bool = False
    last_reload: str = ""
    secret_values: tuple[str, ...] = ()


class RunCuratedBody(BaseModel):
    session_id: Optional[str] = None


class RunCustomBody(BaseModel):
    question: str
    session_id: Optional[str] = None
    provider: Optional[str] = None
    model: Optional[str] = None


class RefineBody(BaseModel):
    outcome_ref: str
    instruction: str
    target: str  # query | chart | interpretation
    mode: str  # manual | prompt
    provider: Optional[str] = None
    model: Optional[str] = None


class RetainedBody(BaseModel):
    retained: bool


_STATUS_BY_ERROR = {
    NotFoundError: 404,
    PreconditionError: 400,
    ParseError: 400,
    UnsupportedFormError: 400,
    ValidationError: 400,
    DecodeError: 502,
    EndpointUnreachableError: 502,
    EndpointStatusError: 502,
    ProviderError: 502,
    RefinementError: 400,
    RateLimitError: 429,
    IntegrityError: 409,
    BundleVersionError: 400,
}

ROUTE_DESCRIPTIONS = {
    ("GET", "/use-cases"): "List registered use cases with labels and schema fingerprints.",
    ("GET", "/use-cases/{use_case_id}/schema"): "Canonical schema document for one use case.",
    ("GET", "/use-cases/{use_case_id}/questions"): "Curated competency questions of one use case.",
    ("POST", "/use-cases/{use_case_id}/questions/{index}/run"): "Run a curated question (workflow 1).",
    ("POST", "/use-cases/{use_case_id}/custom/run"): "Generate, validate, and run a custom question (workflow 2).",
    ("POST", "/sessions/{session_id}/refine"): "Refine a previous outcome manually or by prompting.",
    ("GET", "/sessions/{session_id}/history"): "Full audit history of a session, discarded events included.",
    ("POST", "/sessions/{session_id}/events/{event_id}/retained"): "Toggle whether an event feeds LLM context.",
    ("GET", "/sessions/{session_id}/export/{outcome_ref}"): "Download one outcome as an integrity-checked bundle.",
    ("POST", "/import"): "Import a bundle into a fresh session.",
    ("GET", "/statistics"): "Catalog and usage statistics.",
    ("GET", "/api-description"): "This machine-readable description of every route.",
}


def _error_response(exc: CqdashError, status: int) -> JSONResponse:
    body = {
        "code": exc.code,
        "message": exc.message,
        "correlation_id": uuid.uuid4().hex,
    }
    for attr in ("violations", "diagnostics", "retry_after", "status", "path", "offset"):
        value = getattr(exc, attr, None)
        if value not in (None, [], ""):
            body[attr] = value
    headers = {}
    if isinstance(exc, RateLimitError):
        headers["Retry-After"] = str(exc.retry_after)
    return JSONResponse(status_code=status, content=body, headers=headers)


def build_app(state: AppState) -> FastAPI:
    app = FastAPI(title="cqdash", version=__version__, openapi_url="/openapi.json")
    app.state.cqdash = state

    @app.exception_handler(CqdashError)
    async def handle_domain_error(request: Request, exc: CqdashError):
        status = 500
        for klass, code in _STATUS_BY_ERROR.items():
            if isinstance(exc, klass):
                status = code
                break
        return _error_response(exc, status)

    @app.exception_handler(404)
    async def handle_404(request: Request, exc):
        return _error_response(NotFoundError(f"no route for {request.url.path}"), 404)

    def client_key(request: Request) -> str:
        if state.trusted_proxy:
            forwarded = request.headers.get("x-forwarded-for")
            if forwarded:
                return forwarded.split(",")[0].strip()
        return request.client.host if request.client else "unknown"

    def llm_config(provider: Optional[str], model: Optional[str]) -> LlmConfig:
        return LlmConfig(
            provider_id=provider or DEFAULT_PROVIDER,
            model_id=model or state.limiter.default_model,
        )

    def consume_quota(request: Request, model_id: str):
        decision = state.limiter.check_and_consume(client_key(request), model_id)
        if not decision.allowed:
            raise RateLimitError(
                "daily request limit for the default model reached",
                retry_after=decision.retry_after,
            )

    def ensure_session(session_id: Optional[str]) -> str:
        if session_id:
            state.sessions.session(session_id)
            return session_id
        return state.sessions.create_session()

    # -- catalog browsing ---------------------------------------------------

    @app.get("/use-cases")
    def list_use_cases():
        out = []
        for use_case_id in state.catalogs.use_case_ids():
            descriptor = state.catalogs.descriptor(use_case_id)
            out.append(
                {
                    "use_case_id": descriptor.use_case_id,
                    "label": descriptor.label,
                    "schema_fingerprint": descriptor.schema_ref,
                    "question_count": len(state.catalogs.list_questions(use_case_id)),
                }
            )
        return out

    @app.get("/use-cases/{use_case_id}/schema")
    def get_schema(use_case_id: str):
        schema = state.schemas.get(use_case_id)
        doc = json.loads(canonical_serialization(schema))
        doc["fingerprint"] = schema.fingerprint
        return doc

    @app.get("/use-cases/{use_case_id}/questions")
    def list_questions(use_case_id: str):
        out = []
        for q in state.catalogs.list_questions(use_case_id):
            out.append(
                {
                    "id": q.id,
                    "index": q.index,
                    "question_text": q.question_text,
                    "sparql": q.sparql_text,
                    "chart_kind": q.chart.kind,
                    "interpretation": q.interpretation,
                    "explanation": q.explanation,
                    "provenance_note": q.provenance_note,
                }
            )
        return out

    # -- workflows ----------------------------------------------------------

    @app.post("/use-cases/{use_case_id}/questions/{index}/run")
    def run_curated(use_case_id: str, index: int, body: RunCuratedBody):
        session_id = ensure_session(body.session_id)
        outcome = state.pipeline.run_curated(use_case_id, index, session_id)
        payload = outcome_to_payload(outcome)
        payload["session_id"] = session_id
        payload["outcome_ref"] = outcome.outcome_event_id
        return payload

    @app.post("/use-cases/{use_case_id}/custom/run")
    def run_custom(use_case_id: str, body: RunCustomBody, request: Request):
        cfg = llm_config(body.provider, body.model)
        consume_quota(request, cfg.model_id)
        session_id = ensure_session(body.session_id)
        outcome = state.pipeline.run_custom(body.question, use_case_id, session_id, cfg)
        payload = outcome_to_payload(outcome)
        payload["session_id"] = session_id
        payload["outcome_ref"] = outcome.outcome_event_id
        return payload

    @app.post("/sessions/{session_id}/refine")
    def refine(session_id: str, body: RefineBody, request: Request):
        cfg = llm_config(body.provider, body.model)
        if body.mode == "prompt":
            consume_quota(request, cfg.model_id)
        outcome = state.pipeline.refine(
            session_id, body.outcome_ref, body.instruction, body.target, body.mode, cfg
        )
        payload = outcome_to_payload(outcome)
        payload["session_id"] = session_id
        payload["outcome_ref"] = outcome.outcome_event_id
        return payload

    # -- history and bundles ------------------------------------------------

    @app.get("/sessions/{session_id}/history")
    def history(session_id: str):
        return [
            {
                "event_id": e.event_id,
                "timestamp": e.timestamp,
                "kind": e.kind,
                "retained": e.retained,
                "payload": e.payload,
            }
            for e in state.sessions.events(session_id)
        ]

    @app.post("/sessions/{session_id}/events/{event_id}/retained")
    def set_retained(session_id: str, event_id: str, body: RetainedBody):
        state.sessions.set_retained(session_id, event_id, body.retained)
        return {"event_id": event_id, "retained": body.retained}

    @app.get("/sessions/{session_id}/export/{outcome_ref}")
    def export(session_id: str, outcome_ref: str):
        bundle = export_bundle(
            state.sessions, session_id, outcome_ref, state.secret_values
        )
        filename = f"{outcome_ref}{BUNDLE_SUFFIX}"
        return Response(
            content=json.dumps(bundle, ensure_ascii=False, indent=2),
            media_type="application/json",
            headers={"Content-Disposition": f'attachment; filename="{filename}"'},
        )

    @app.post("/import")
    async def import_(request: Request):
        try:
            bundle = json.loads(await request.body())
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed bundle document: {exc.msg}") from exc
        registered = {u[0]: u[2] for u in state.schemas.list_use_cases()}
        session_id = import_bundle(state.sessions, bundle, registered)
        return {"session_id": session_id}

    # -- meta ---------------------------------------------------------------

    @app.get("/statistics")
    def statistics():
        return compute_statistics(state.catalogs, state.sessions, state.last_reload)

    @app.get("/api-description")
    def api_description():
        routes = []
        for route in app.routes:
            path = getattr(route, "path", "")
            methods = getattr(route, "methods", None) or ()
            if path in ("/openapi.json", "/docs", "/docs/oauth2-redirect", "/redoc"):
                continue
            for method in sorted(m for m in methods if m != "HEAD"):
                routes.append(
                    {
                        "method": method,
                        "path": path,
                        "description": ROUTE_DESCRIPTIONS.get((method, path), ""),
                    }
                )
        routes.sort(key=lambda r: (r["path"], r["method"]))
        return {"service": "cqdash", "version": __version__, "routes": routes}

    return app
