"""Five-stage competency-question pipeline for curated and custom
workflows, plus manual and prompt-based refinement.

Stages: select-or-generate, execute, process, visualize-interpret, refine.
The refine stage is always present as the fifth trace entry; each actual
refinement appends a further refine step to the new outcome's trace.
Every LLM call in a run is attributed to exactly one step record.
"""

from __future__ import annotations

import hashlib
import json
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

from .catalog import CatalogRegistry, CuratedQuestion
from .errors import (
    CqdashError,
    EndpointStatusError,
    EndpointUnreachableError,
    ExtractionError,
    PreconditionError,
    ProviderError,
    RefinementError,
    RepairExhaustedError,
)
from .llm.generation import CandidateQuery, Interpretation, NeuralLayer
from .llm.providers import LlmConfig, LlmRequest, LlmResponse, ProviderRegistry
from .schema import SchemaRegistry
from .sessions import SessionStore
from .sparql.client import SparqlClient
from .sparql.consistency import check_schema_consistency
from .sparql.parser import ParsedQuery, parse_query
from .sparql.results import ResultSet, decode_results, encode_results
from .tabular import (
    ChartSpec,
    Dataset,
    chart_document,
    chart_spec_from_document,
    dataset_from_document,
    default_chart,
    tabulate,
    validate_chart,
)

STAGES = ("select-or-generate", "execute", "process", "visualize-interpret", "refine")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _digest(payload) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, ensure_ascii=False, default=str).encode("utf-8")
    ).hexdigest()[:16]


@dataclass(frozen=True)
class StepRecord:
    stage: str
    started: str
    finished: str
    inputs_digest: str
    outputs_digest: str
    error: Optional[str] = None
    note: Optional[str] = None
    llm_calls: tuple[str, ...] = ()  # digests of the calls made in this stage


@dataclass
class QuestionOutcome:
    question_ref: str
    question_kind: str  # curated | custom
    use_case_id: str
    schema_fingerprint: str
    query_text: str = ""
    result: Optional[ResultSet] = None
    dataset: Optional[Dataset] = None
    chart: Optional[ChartSpec] = None
    interpretation: Optional[Interpretation] = None
    steps: list[StepRecord] = field(default_factory=list)
    status: str = "complete"  # complete | failed
    failed_stage: Optional[str] = None
    error: Optional[str] = None
    query_history: list[dict] = field(default_factory=list)
    prompt_transcript: list[dict] = field(default_factory=list)
    llm_config: Optional[dict] = None  # provider + model only, never secrets
    outcome_event_id: str = ""
    session_id: str = ""

    def trace_digest(self) -> str:
        stable = [
            (s.stage, s.inputs_digest, s.outputs_digest, s.error, s.note, list(s.llm_calls))
            for s in self.steps
        ]
        return _digest(stable)


class _RecordingRegistry:
    """Per-run proxy that logs every chat completion for auditing."""

    def __init__(self, inner: ProviderRegistry):
        self._inner = inner
        self.exchanges: list[dict] = []

    def complete(self, req: LlmRequest) -> LlmResponse:
        response = self._inner.complete(req)
        self.exchanges.append(
            {
                "messages": [{"role": m.role, "content": m.content} for m in req.messages],
                "response": response.content,
                "model": req.config.model_id,
                "provider": req.config.provider_id,
            }
        )
        return response


class _StageTimer:
    def __init__(self, stage: str, inputs, recorder: Optional[_RecordingRegistry] = None):
        self.stage = stage
        self.inputs_digest = _digest(inputs)
        self.recorder = recorder
        self.calls_before = len(recorder.exchanges) if recorder else 0
        self.started = _now()

    def record(self, outputs, error: Optional[str] = None, note: Optional[str] = None) -> StepRecord:
        llm_calls: tuple[str, ...] = ()
        if self.recorder is not None:
            llm_calls = tuple(
                _digest(ex) for ex in self.recorder.exchanges[self.calls_before :]
            )
        return StepRecord(
            stage=self.stage,
            started=self.started,
            finished=_now(),
            inputs_digest=self.inputs_digest,
            outputs_digest=_digest(outputs),
            error=error,
            note=note,
            llm_calls=llm_calls,
        )


class Pipeline:
    def __init__(
        self,
        schemas: SchemaRegistry,
        catalogs: CatalogRegistry,
        sessions: SessionStore,
        clients: dict[str, SparqlClient],
        llm_registry: ProviderRegistry,
        max_repair_attempts: int = 3,
    ):
        self.schemas = schemas
        self.catalogs = catalogs
        self.sessions = sessions
        self.clients = clients
        self.llm_registry = llm_registry
        self.max_repair_attempts = max_repair_attempts
        self._session_locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._locks_guard = threading.Lock()

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._session_locks[session_id]

    def _client_for(self, use_case_id: str) -> SparqlClient:
        descriptor = self.catalogs.descriptor(use_case_id)
        client = self.clients.get(descriptor.endpoint_ref)
        if client is None:
            raise PreconditionError(
                f"no endpoint configured for {descriptor.endpoint_ref!r}"
            )
        return client

    # -- workflow 1: curated ----------------------------------------------

    def run_curated(self, use_case_id: str, index: int, session_id: str) -> QuestionOutcome:
        question = self.catalogs.get_question(use_case_id, index)  # not-found before any stage
        self.sessions.session(session_id)
        with self._session_lock(session_id):
            return self._run_curated_locked(question, session_id)

    def _run_curated_locked(self, question: CuratedQuestion, session_id: str) -> QuestionOutcome:
        schema = self.schemas.get(question.use_case_id)
        outcome = QuestionOutcome(
            question_ref=question.id,
            question_kind="curated",
            use_case_id=question.use_case_id,
            schema_fingerprint=schema.fingerprint,
            session_id=session_id,
        )
        self.sessions.append_event(
            session_id,
            "question-submitted",
            {"question": question.question_text, "kind": "curated",
             "use_case_id": question.use_case_id, "index": question.index},
        )

        timer = _StageTimer("select-or-generate", {"question": question.id})
        parsed = parse_query(question.sparql_text)
        outcome.query_text = question.sparql_text
        outcome.query_history.append({"sparql": question.sparql_text, "source": "curated", "attempt": 1})
        outcome.steps.append(timer.record({"sparql": question.sparql_text}))

        parsed_result = self._execute_stage(outcome, parsed)
        if parsed_result is None:
            return self._finish(outcome, session_id)
        self._process_stage(outcome, parsed_result)

        timer = _StageTimer("visualize-interpret", {"chart": question.chart.kind})
        chart = question.chart
        note = None
        if validate_chart(chart, outcome.dataset):
            chart = default_chart(outcome.dataset)
            note = "curated chart invalid for live data; fell back to the default chart"
        outcome.chart = chart
        outcome.interpretation = Interpretation(
            summary=question.interpretation,
            explanation=question.explanation,
            caveats=(),
            generator="curated",
        )
        outcome.steps.append(timer.record({"chart": chart.kind}, note=note))
        self._append_refine_marker(outcome)
        return self._finish(outcome, session_id)

    # -- workflow 2: custom -----------------------------------------------

    def run_custom(
        self, question_text: str, use_case_id: str, session_id: str, cfg: LlmConfig
    ) -> QuestionOutcome:
        if not question_text or not question_text.strip():
            raise PreconditionError("question text must be non-empty")
        self.catalogs.descriptor(use_case_id)
        self.sessions.session(session_id)
        with self._session_lock(session_id):
            return self._run_custom_locked(question_text, use_case_id, session_id, cfg)

    def _run_custom_locked(
        self, question_text: str, use_case_id: str, session_id: str, cfg: LlmConfig
    ) -> QuestionOutcome:
        schema = self.schemas.get(use_case_id)
        recorder = _RecordingRegistry(self.llm_registry)
        neural = NeuralLayer(recorder, max_repair_attempts=self.max_repair_attempts)
        outcome = QuestionOutcome(
            question_ref=question_text,
            question_kind="custom",
            use_case_id=use_case_id,
            schema_fingerprint=schema.fingerprint,
            session_id=session_id,
            llm_config={"provider": cfg.provider_id, "model": cfg.model_id},
        )
        self.sessions.append_event(
            session_id,
            "question-submitted",
            {"question": question_text, "kind": "custom", "use_case_id": use_case_id},
        )

        timer = _StageTimer("select-or-generate", {"question": question_text}, recorder)
        candidate: Optional[CandidateQuery] = None
        parsed: Optional[ParsedQuery] = None
        diagnostics: list[str] = []
        try:
            while True:
                if candidate is None:
                    candidate = neural.generate_query(question_text, schema, [], cfg)
                else:
                    candidate = neural.repair_query(candidate, diagnostics, schema, [], cfg)
                outcome.query_history.append(
                    {"sparql": candidate.sparql_text, "source": "llm",
                     "attempt": candidate.attempt, "diagnostics": diagnostics}
                )
                diagnostics = self._validate_candidate(candidate, schema)
                if not diagnostics:
                    parsed = parse_query(candidate.sparql_text)
                    break
        except (RepairExhaustedError, ExtractionError, ProviderError) as exc:
            diag_history = getattr(exc, "diagnostics", None) or diagnostics
            outcome.steps.append(
                timer.record({"error": exc.message}, error=exc.message)
            )
            outcome.status = "failed"
            outcome.failed_stage = "select-or-generate"
            outcome.error = exc.message
            outcome.query_history.append({"diagnostics": list(diag_history), "source": "failure"})
            outcome.prompt_transcript = recorder.exchanges
            return self._finish(outcome, session_id)

        outcome.query_text = candidate.sparql_text
        outcome.steps.append(
            timer.record({"sparql": candidate.sparql_text}, note=f"attempts: {candidate.attempt}")
        )

        result = self._execute_stage(outcome, parsed, recorder)
        if result is None:
            outcome.prompt_transcript = recorder.exchanges
            return self._finish(outcome, session_id)
        self._process_stage(outcome, result)

        timer = _StageTimer("visualize-interpret", {"question": question_text}, recorder)
        chart = neural.suggest_chart(question_text, outcome.dataset, cfg)
        interpretation = neural.interpret_results(question_text, outcome.dataset, chart, cfg)
        outcome.chart = chart
        outcome.interpretation = interpretation
        outcome.steps.append(timer.record({"chart": chart.kind, "summary": interpretation.summary}))
        self._append_refine_marker(outcome)
        outcome.prompt_transcript = recorder.exchanges
        return self._finish(outcome, session_id)

    def _validate_candidate(self, candidate: CandidateQuery, schema) -> list[str]:
        try:
            parsed = parse_query(candidate.sparql_text)
        except CqdashError as exc:
            return [f"{exc.code}: {exc.message}"]
        if parsed.analyzable:
            return check_schema_consistency(parsed, schema)
        return []  # endpoint remains the source of truth for passthrough queries

    # -- shared stages ------------------------------------------------------

    def _execute_stage(
        self, outcome: QuestionOutcome, parsed: ParsedQuery, recorder=None
    ) -> Optional[ResultSet]:
        timer = _StageTimer("execute", {"sparql": parsed.text}, recorder)
        client = self._client_for(outcome.use_case_id)
        try:
            result = client.execute(parsed, outcome.schema_fingerprint)
        except (EndpointUnreachableError, EndpointStatusError, CqdashError) as exc:
            outcome.steps.append(timer.record({"error": exc.message}, error=exc.message))
            outcome.status = "failed"
            outcome.failed_stage = "execute"
            outcome.error = exc.message
            return None
        outcome.result = result
        row_count = 1 if result.is_boolean else len(result.rows)
        outcome.steps.append(timer.record({"rows": row_count}))
        return result

    def _process_stage(self, outcome: QuestionOutcome, result: ResultSet):
        timer = _StageTimer("process", {"rows": 1 if result.is_boolean else len(result.rows)})
        tabular_result = result
        if result.is_boolean:
            from .sparql.terms import Literal, XSD_BOOLEAN

            tabular_result = ResultSet(
                variables=["answer"],
                rows=[{"answer": Literal("true" if result.boolean else "false", datatype=XSD_BOOLEAN)}],
            )
        dataset = tabulate(
            tabular_result,
            query_text=outcome.query_text,
            endpoint=self._client_for(outcome.use_case_id).config.url,
            retrieved_at=_now(),
        )
        outcome.dataset = dataset
        outcome.steps.append(
            timer.record({"columns": dataset.column_names(), "rows": len(dataset.rows)})
        )

    def _append_refine_marker(self, outcome: QuestionOutcome):
        timer = _StageTimer("refine", {})
        outcome.steps.append(timer.record({}, note="refinement available"))

    def _finish(self, outcome: QuestionOutcome, session_id: str) -> QuestionOutcome:
        payload = outcome_to_payload(outcome)
        event_id = self.sessions.append_event(session_id, "outcome", payload)
        for exchange in outcome.prompt_transcript:
            self.sessions.append_event(session_id, "llm-exchange", exchange)
        outcome.outcome_event_id = event_id
        return outcome

    # -- refinement ---------------------------------------------------------

    def refine(
        self,
        session_id: str,
        outcome_ref: str,
        instruction: str,
        target: str,  # query | chart | interpretation
        mode: str,  # manual | prompt
        cfg: Optional[LlmConfig] = None,
    ) -> QuestionOutcome:
        if target not in ("query", "chart", "interpretation"):
            raise PreconditionError(f"unknown refinement target {target!r}")
        if mode not in ("manual", "prompt"):
            raise PreconditionError(f"unknown refinement mode {mode!r}")
        with self._session_lock(session_id):
            return self._refine_locked(session_id, outcome_ref, instruction, target, mode, cfg)

    def _refine_locked(self, session_id, outcome_ref, instruction, target, mode, cfg):
        event = self.sessions.find_outcome(session_id, outcome_ref)
        base = event.payload
        use_case_id = base["use_case_id"]
        schema = self.schemas.get(use_case_id)
        recorder = _RecordingRegistry(self.llm_registry)
        neural = NeuralLayer(recorder, max_repair_attempts=self.max_repair_attempts)
        cfg = cfg or LlmConfig()

        outcome = QuestionOutcome(
            question_ref=base["question_ref"],
            question_kind=base["question_kind"],
            use_case_id=use_case_id,
            schema_fingerprint=schema.fingerprint,
            session_id=session_id,
            query_text=base.get("query_text", ""),
            query_history=list(base.get("query_history", [])),
            llm_config={"provider": cfg.provider_id, "model": cfg.model_id}
            if mode == "prompt"
            else base.get("llm_config"),
        )
        reused = _StageTimer("select-or-generate", {"reused_from": outcome_ref}, recorder)
        outcome.steps.append(reused.record({"reused": True}, note="reused"))

        self.sessions.append_event(
            session_id,
            "refinement",
            {"outcome_ref": outcome_ref, "target": target, "mode": mode, "instruction": instruction},
        )

        if target == "query":
            new_query = instruction if mode == "manual" else None
            if mode == "prompt":
                prev = CandidateQuery(
                    sparql_text=base.get("query_text", ""), rationale="", attempt=1
                )
                candidate = neural.repair_query(
                    prev, [f"user refinement request: {instruction}"], schema, [], cfg
                )
                new_query = candidate.sparql_text
            try:
                parsed = parse_query(new_query)
            except CqdashError as exc:
                raise RefinementError(
                    f"refined query rejected: {exc.message}", diagnostics=[exc.message]
                ) from exc
            if parsed.analyzable:
                inconsistencies = check_schema_consistency(parsed, schema)
                if inconsistencies:
                    raise RefinementError(
                        "refined query is schema-inconsistent", diagnostics=inconsistencies
                    )
            outcome.query_text = new_query
            outcome.query_history.append(
                {"sparql": new_query, "source": mode, "attempt": len(outcome.query_history) + 1}
            )
            result = self._execute_stage(outcome, parsed, recorder)
            if result is None:
                outcome.prompt_transcript = recorder.exchanges
                return self._finish(outcome, session_id)
            self._process_stage(outcome, result)
            timer = _StageTimer("visualize-interpret", {"refined": True}, recorder)
            if base["question_kind"] == "custom":
                chart = neural.suggest_chart(outcome.question_ref, outcome.dataset, cfg)
                interpretation = neural.interpret_results(
                    outcome.question_ref, outcome.dataset, chart, cfg
                )
            else:
                chart = chart_spec_from_document(base["chart"]) if base.get("chart") else None
                if chart is None or validate_chart(chart, outcome.dataset):
                    chart = default_chart(outcome.dataset)
                interpretation = _interpretation_from_payload(base.get("interpretation"))
            outcome.chart = chart
            outcome.interpretation = interpretation
            outcome.steps.append(timer.record({"chart": chart.kind}))
        else:
            # carry over the executed artifacts untouched
            outcome.result = decode_results(json.dumps(base["result"]).encode()) if base.get("result") else None
            outcome.dataset = dataset_from_document(base["dataset"]) if base.get("dataset") else None
            outcome.steps.append(
                _StageTimer("execute", {"reused_from": outcome_ref}).record({"reused": True}, note="reused")
            )
            outcome.steps.append(
                _StageTimer("process", {"reused_from": outcome_ref}).record({"reused": True}, note="reused")
            )
            timer = _StageTimer("visualize-interpret", {"target": target}, recorder)
            chart = chart_spec_from_document(base["chart"]) if base.get("chart") else default_chart(outcome.dataset)
            interpretation = _interpretation_from_payload(base.get("interpretation"))
            if target == "chart":
                if mode == "manual":
                    try:
                        chart = chart_spec_from_document(json.loads(instruction))
                    except (json.JSONDecodeError, KeyError) as exc:
                        raise RefinementError(f"invalid chart document: {exc}") from exc
                    violations = validate_chart(chart, outcome.dataset)
                    if violations:
                        raise RefinementError(
                            "refined chart is invalid", diagnostics=violations
                        )
                else:
                    chart = neural.suggest_chart(
                        f"{outcome.question_ref}\nRefinement: {instruction}",
                        outcome.dataset,
                        cfg,
                    )
            else:  # interpretation
                if mode == "manual":
                    interpretation = Interpretation(
                        summary=instruction, explanation="", caveats=(), generator="curated"
                    )
                else:
                    interpretation = neural.interpret_results(
                        f"{outcome.question_ref}\nRefinement: {instruction}",
                        outcome.dataset,
                        chart,
                        cfg,
                    )
            outcome.chart = chart
            outcome.interpretation = interpretation
            outcome.steps.append(timer.record({"chart": chart.kind}))

        self._append_refine_marker(outcome)
        outcome.prompt_transcript = recorder.exchanges
        return self._finish(outcome, session_id)


# ---------------------------------------------------------------------------
# payload serialization

def outcome_to_payload(outcome: QuestionOutcome) -> dict:
    result_doc = None
    if outcome.result is not None:
        result_doc = json.loads(encode_results(outcome.result).decode("utf-8"))
    dataset_doc = None
    if outcome.dataset is not None:
        dataset_doc = {
            "columns": [{"name": c.name, "type": c.type} for c in outcome.dataset.columns],
            "data": {
                c.name: [row[i] for row in outcome.dataset.rows]
                for i, c in enumerate(outcome.dataset.columns)
            },
            "provenance": {
                "query_text": outcome.dataset.provenance.query_text,
                "endpoint": outcome.dataset.provenance.endpoint,
                "retrieved_at": outcome.dataset.provenance.retrieved_at,
                "warnings": list(outcome.dataset.provenance.warnings),
            },
        }
    chart_doc = None
    if outcome.chart is not None and outcome.dataset is not None:
        chart_doc = chart_document(outcome.chart, outcome.dataset)
    interp_doc = None
    if outcome.interpretation is not None:
        interp_doc = {
            "summary": outcome.interpretation.summary,
            "explanation": outcome.interpretation.explanation,
            "caveats": list(outcome.interpretation.caveats),
            "generator": outcome.interpretation.generator,
        }
    return {
        "question_ref": outcome.question_ref,
        "question_kind": outcome.question_kind,
        "use_case_id": outcome.use_case_id,
        "schema_fingerprint": outcome.schema_fingerprint,
        "query_text": outcome.query_text,
        "result": result_doc,
        "dataset": dataset_doc,
        "chart": chart_doc,
        "interpretation": interp_doc,
        "status": outcome.status,
        "failed_stage": outcome.failed_stage,
        "error": outcome.error,
        "steps": [
            {
                "stage": s.stage,
                "started": s.started,
                "finished": s.finished,
                "inputs_digest": s.inputs_digest,
                "outputs_digest": s.outputs_digest,
                "error": s.error,
                "note": s.note,
                "llm_calls": list(s.llm_calls),
            }
            for s in outcome.steps
        ],
        "query_history": outcome.query_history,
        "prompt_transcript": outcome.prompt_transcript,
        "llm_config": outcome.llm_config,
        "trace_digest": outcome.trace_digest(),
    }


def _interpretation_from_payload(doc: Optional[dict]) -> Interpretation:
    if not doc:
        return Interpretation(summary="", explanation="", caveats=(), generator="curated")
    return Interpretation(
        summary=doc.get("summary", ""),
        explanation=doc.get("explanation", ""),
        caveats=tuple(doc.get("caveats", [])),
        generator=doc.get("generator", "curated"),
    )
