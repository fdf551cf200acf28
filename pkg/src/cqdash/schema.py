"""Graph schema loading, validation, and registry.

A schema document is a versioned JSON file declaring the classes and
predicates of one use case's knowledge-graph slice. Loaded schemas ground
SPARQL generation and consistency checking; the registry serves them to
request handlers.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field

from .errors import ParseError, PreconditionError, ValidationError

WILDCARD = "*"

#: XSD datatypes accepted as predicate ranges.
LITERAL_DATATYPES = {
    "http://www.w3.org/2001/XMLSchema#string",
    "http://www.w3.org/2001/XMLSchema#integer",
    "http://www.w3.org/2001/XMLSchema#decimal",
    "http://www.w3.org/2001/XMLSchema#double",
    "http://www.w3.org/2001/XMLSchema#boolean",
    "http://www.w3.org/2001/XMLSchema#date",
    "http://www.w3.org/2001/XMLSchema#dateTime",
    "http://www.w3.org/2001/XMLSchema#gYear",
    "http://www.w3.org/2001/XMLSchema#anyURI",
}

SUPPORTED_DOCUMENT_VERSION = 1

SUMMARY_MIN_BUDGET = 200
TRUNCATION_MARKER = "…[truncated]"


def _is_absolute_iri(iri: str) -> bool:
    scheme, sep, rest = iri.partition(":")
    return bool(sep) and scheme.isalpha() and bool(rest)


@dataclass(frozen=True)
class ClassDef:
    iri: str
    label: str
    description: str | None = None


@dataclass(frozen=True)
class PredicateDef:
    iri: str
    label: str
    domain: str  # class IRI or WILDCARD
    range: str  # class IRI, datatype IRI, or WILDCARD


@dataclass(frozen=True)
class GraphSchema:
    use_case_id: str
    label: str
    prefixes: dict[str, str]
    classes: tuple[ClassDef, ...]
    predicates: tuple[PredicateDef, ...]
    fingerprint: str = field(default="", compare=False)

    def class_iris(self) -> set[str]:
        return {c.iri for c in self.classes}

    def predicate_iris(self) -> set[str]:
        return {p.iri for p in self.predicates}

    def declared_namespaces(self) -> tuple[str, ...]:
        return tuple(sorted(self.prefixes.values()))

    def expand(self, prefixed: str) -> str:
        """Expand a ``prefix:local`` name using the schema's prefix map."""
        prefix, sep, local = prefixed.partition(":")
        if not sep or prefix not in self.prefixes:
            raise PreconditionError(f"unknown prefix in {prefixed!r}")
        return self.prefixes[prefix] + local


def canonical_serialization(schema: GraphSchema) -> str:
    """Deterministic JSON form; classes and predicates sorted by IRI."""
    doc = {
        "version": SUPPORTED_DOCUMENT_VERSION,
        "use_case_id": schema.use_case_id,
        "label": schema.label,
        "prefixes": {k: schema.prefixes[k] for k in sorted(schema.prefixes)},
        "classes": [
            {"iri": c.iri, "label": c.label, "description": c.description}
            for c in sorted(schema.classes, key=lambda c: c.iri)
        ],
        "predicates": [
            {"iri": p.iri, "label": p.label, "domain": p.domain, "range": p.range}
            for p in sorted(schema.predicates, key=lambda p: p.iri)
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _fingerprint(schema: GraphSchema) -> str:
    return hashlib.sha256(canonical_serialization(schema).encode("utf-8")).hexdigest()


def _expand_ref(ref: str, prefixes: dict[str, str]) -> str:
    """Expand a possibly-prefixed IRI reference; passes WILDCARD through."""
    if ref == WILDCARD:
        return ref
    prefix, sep, local = ref.partition(":")
    if sep and prefix in prefixes:
        return prefixes[prefix] + local
    return ref


def load_schema(source: str | bytes | dict) -> GraphSchema:
    """Parse and validate one schema document.

    Raises ParseError for malformed JSON and ValidationError listing every
    invariant violation at once.
    """
    if isinstance(source, (str, bytes)):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ParseError(
                f"malformed schema document: {exc.msg} at line {exc.lineno} column {exc.colno}",
                offset=exc.pos,
            ) from exc
    else:
        doc = source
    if not isinstance(doc, dict):
        raise ParseError("schema document must be a JSON object")

    violations: list[str] = []
    if doc.get("version") != SUPPORTED_DOCUMENT_VERSION:
        violations.append(f"unsupported document version {doc.get('version')!r}")
    use_case_id = doc.get("use_case_id")
    if not isinstance(use_case_id, str) or not use_case_id:
        violations.append("use_case_id must be a non-empty string")
        use_case_id = ""
    label = doc.get("label") or use_case_id
    prefixes = doc.get("prefixes") or {}
    if not isinstance(prefixes, dict):
        violations.append("prefixes must be an object")
        prefixes = {}
    for pfx, ns in prefixes.items():
        if not _is_absolute_iri(str(ns)):
            violations.append(f"prefix {pfx!r} maps to non-absolute namespace {ns!r}")

    classes: list[ClassDef] = []
    seen_class_iris: set[str] = set()
    for i, raw in enumerate(doc.get("classes") or []):
        iri = _expand_ref(str(raw.get("iri", "")), prefixes)
        if not _is_absolute_iri(iri):
            violations.append(f"class #{i} has non-absolute IRI {iri!r}")
        if iri in seen_class_iris:
            violations.append(f"duplicate class IRI {iri!r}")
        seen_class_iris.add(iri)
        classes.append(ClassDef(iri=iri, label=str(raw.get("label", "")), description=raw.get("description")))

    predicates: list[PredicateDef] = []
    seen_pred_iris: set[str] = set()
    for i, raw in enumerate(doc.get("predicates") or []):
        iri = _expand_ref(str(raw.get("iri", "")), prefixes)
        if not _is_absolute_iri(iri):
            violations.append(f"predicate #{i} has non-absolute IRI {iri!r}")
        if iri in seen_pred_iris:
            violations.append(f"duplicate predicate IRI {iri!r}")
        seen_pred_iris.add(iri)
        domain = _expand_ref(str(raw.get("domain", WILDCARD)), prefixes)
        rng = _expand_ref(str(raw.get("range", WILDCARD)), prefixes)
        predicates.append(
            PredicateDef(iri=iri, label=str(raw.get("label", "")), domain=domain, range=rng)
        )

    class_iris = {c.iri for c in classes}
    for pred in predicates:
        if pred.domain != WILDCARD and pred.domain not in class_iris:
            violations.append(
                f"predicate {pred.iri!r} domain references undeclared class {pred.domain!r}"
            )
        if (
            pred.range != WILDCARD
            and pred.range not in class_iris
            and pred.range not in LITERAL_DATATYPES
        ):
            violations.append(
                f"predicate {pred.iri!r} range references undeclared class or datatype {pred.range!r}"
            )

    if violations:
        raise ValidationError(
            f"schema document for {use_case_id or '<unknown>'} is invalid", violations=violations
        )

    schema = GraphSchema(
        use_case_id=use_case_id,
        label=label,
        prefixes=dict(prefixes),
        classes=tuple(classes),
        predicates=tuple(predicates),
    )
    return GraphSchema(
        use_case_id=schema.use_case_id,
        label=schema.label,
        prefixes=schema.prefixes,
        classes=schema.classes,
        predicates=schema.predicates,
        fingerprint=_fingerprint(schema),
    )


def schema_summary(schema: GraphSchema, budget: int) -> str:
    """Linearize a schema for prompt grounding, capped at ``budget`` characters.

    Deterministic for a given (schema, budget); a truncated summary ends in
    the truncation marker.
    """
    if budget < SUMMARY_MIN_BUDGET:
        raise PreconditionError(f"summary budget must be at least {SUMMARY_MIN_BUDGET}, got {budget}")
    lines = [f"Use case: {schema.use_case_id} ({schema.label})", "Prefixes:"]
    for pfx in sorted(schema.prefixes):
        lines.append(f"  PREFIX {pfx}: <{schema.prefixes[pfx]}>")
    lines.append("Classes:")
    for c in sorted(schema.classes, key=lambda c: c.iri):
        desc = f" -- {c.description}" if c.description else ""
        lines.append(f"  <{c.iri}> \"{c.label}\"{desc}")
    lines.append("Predicates (domain -> range):")
    for p in sorted(schema.predicates, key=lambda p: p.iri):
        lines.append(f"  <{p.iri}> \"{p.label}\": {p.domain} -> {p.range}")
    text = "\n".join(lines)
    if len(text) <= budget:
        return text
    return text[: budget - len(TRUNCATION_MARKER)] + TRUNCATION_MARKER


class SchemaRegistry:
    """Thread-safe read-mostly registry; registration is an atomic swap."""

    def __init__(self):
        self._lock = threading.Lock()
        self._schemas: dict[str, GraphSchema] = {}

    def register(self, source: str | bytes | dict) -> GraphSchema:
        schema = load_schema(source)
        with self._lock:
            updated = dict(self._schemas)
            updated[schema.use_case_id] = schema
            self._schemas = updated
        return schema

    def get(self, use_case_id: str) -> GraphSchema:
        schema = self._schemas.get(use_case_id)
        if schema is None:
            from .errors import NotFoundError

            raise NotFoundError(f"unknown use case {use_case_id!r}")
        return schema

    def __contains__(self, use_case_id: str) -> bool:
        return use_case_id in self._schemas

    def list_use_cases(self) -> list[tuple[str, str, str]]:
        """(use_case_id, label, fingerprint) triples, ordered by use_case_id."""
        snapshot = self._schemas
        return [
            (uc, snapshot[uc].label, snapshot[uc].fingerprint) for uc in sorted(snapshot)
        ]
