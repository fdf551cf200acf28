"""Curated competency-question catalogs.

One catalog per use case: ordered pairs of natural-language questions and
validated SPARQL queries, plus chart configuration and manually written
interpretation/explanation text. LLM output is only ever additive on top
of the curated text, never a replacement.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass

from .errors import NotFoundError, ParseError, CqdashError
from .schema import GraphSchema, SchemaRegistry
from .sparql.consistency import check_schema_consistency
from .sparql.parser import parse_query
from .tabular import ChartSpec, chart_spec_from_document

CATALOG_VERSION = 1


@dataclass(frozen=True)
class CuratedQuestion:
    id: str
    use_case_id: str
    index: int  # 1-based position
    question_text: str
    sparql_text: str
    chart: ChartSpec
    interpretation: str
    explanation: str
    provenance_note: str


@dataclass(frozen=True)
class UseCaseDescriptor:
    use_case_id: str
    label: str
    schema_ref: str  # fingerprint of the bound GraphSchema
    endpoint_ref: str


def load_catalog(source: str | bytes | dict) -> tuple[str, str, list[CuratedQuestion]]:
    """Parse a catalog document into (use_case_id, endpoint_ref, questions)."""
    if isinstance(source, (str, bytes)):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ParseError(
                f"malformed catalog document: {exc.msg} at line {exc.lineno} column {exc.colno}",
                offset=exc.pos,
            ) from exc
    else:
        doc = source
    if doc.get("version") != CATALOG_VERSION:
        raise ParseError(f"unsupported catalog version {doc.get('version')!r}")
    use_case_id = doc["use_case_id"]
    endpoint_ref = doc.get("endpoint_ref", use_case_id)
    questions = []
    for raw in doc.get("questions", []):
        questions.append(
            CuratedQuestion(
                id=raw["id"],
                use_case_id=use_case_id,
                index=int(raw["index"]),
                question_text=raw["question_text"],
                sparql_text=raw["sparql"],
                chart=chart_spec_from_document(raw.get("chart", {"kind": "table"})),
                interpretation=raw.get("interpretation", ""),
                explanation=raw.get("explanation", ""),
                provenance_note=raw.get("provenance_note", ""),
            )
        )
    questions.sort(key=lambda q: q.index)
    indices = [q.index for q in questions]
    if indices != list(range(1, len(questions) + 1)):
        raise ParseError(f"catalog indices for {use_case_id!r} are not contiguous from 1: {indices}")
    return use_case_id, endpoint_ref, questions


class CatalogRegistry:
    """Read-only after load; reload is an atomic swap."""

    def __init__(self, schemas: SchemaRegistry):
        self._schemas = schemas
        self._lock = threading.Lock()
        self._catalogs: dict[str, list[CuratedQuestion]] = {}
        self._descriptors: dict[str, UseCaseDescriptor] = {}

    def register(self, source: str | bytes | dict) -> UseCaseDescriptor:
        use_case_id, endpoint_ref, questions = load_catalog(source)
        schema = self._schemas.get(use_case_id)  # raises NotFound if unregistered
        descriptor = UseCaseDescriptor(
            use_case_id=use_case_id,
            label=schema.label,
            schema_ref=schema.fingerprint,
            endpoint_ref=endpoint_ref,
        )
        with self._lock:
            self._catalogs = {**self._catalogs, use_case_id: questions}
            self._descriptors = {**self._descriptors, use_case_id: descriptor}
        return descriptor

    def descriptor(self, use_case_id: str) -> UseCaseDescriptor:
        descriptor = self._descriptors.get(use_case_id)
        if descriptor is None:
            raise NotFoundError(f"unknown use case {use_case_id!r}")
        return descriptor

    def use_case_ids(self) -> list[str]:
        return sorted(self._catalogs)

    def list_questions(self, use_case_id: str) -> list[CuratedQuestion]:
        questions = self._catalogs.get(use_case_id)
        if questions is None:
            raise NotFoundError(f"unknown use case {use_case_id!r}")
        return list(questions)

    def get_question(self, use_case_id: str, index: int) -> CuratedQuestion:
        questions = self.list_questions(use_case_id)
        if not 1 <= index <= len(questions):
            raise NotFoundError(
                f"use case {use_case_id!r} has no question {index} (valid: 1..{len(questions)})"
            )
        return questions[index - 1]

    def validate_catalog(self, use_case_id: str) -> list[str]:
        """Violations are data, not errors: empty list means a clean catalog."""
        questions = self.list_questions(use_case_id)
        schema = self._schemas.get(use_case_id)
        violations: list[str] = []
        for q in questions:
            try:
                parsed = parse_query(q.sparql_text)
            except CqdashError as exc:
                violations.append(f"{q.id}: query does not parse: {exc.message}")
                continue
            for inconsistency in check_schema_consistency(parsed, schema):
                violations.append(f"{q.id}: {inconsistency}")
        return violations
