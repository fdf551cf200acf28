"""Decoding and re-encoding of SPARQL JSON result documents.

Supports the standard ``application/sparql-results+json`` layout for SELECT
(head/results) and ASK (head/boolean). Decoding is lossless for IRI,
literal (typed and language-tagged), and blank-node bindings; unbound
variables are simply absent from a row.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..errors import DecodeError
from .terms import BNode, Iri, Literal, Term, XSD_STRING

MEDIA_TYPE = "application/sparql-results+json"


@dataclass
class ResultSet:
    variables: list[str]
    rows: list[dict[str, Term]] = field(default_factory=list)
    boolean: bool | None = None  # set for ASK results, None for SELECT

    def __post_init__(self):
        for i, row in enumerate(self.rows):
            extra = set(row) - set(self.variables)
            if extra:
                raise ValueError(f"row {i} binds undeclared variables {sorted(extra)}")

    @property
    def is_boolean(self) -> bool:
        return self.boolean is not None


def _decode_binding(var: str, raw, path: str) -> Term:
    if not isinstance(raw, dict):
        raise DecodeError(f"binding for ?{var} is not an object", path=path)
    kind = raw.get("type")
    value = raw.get("value")
    if not isinstance(value, str):
        raise DecodeError(f"binding for ?{var} lacks a string value", path=path + "/value")
    if kind == "uri":
        return Iri(value)
    if kind == "bnode":
        return BNode(value)
    if kind in ("literal", "typed-literal"):
        lang = raw.get("xml:lang")
        datatype = raw.get("datatype")
        if lang is not None:
            return Literal(value, language=lang)
        return Literal(value, datatype=datatype)
    raise DecodeError(f"unknown binding type {kind!r}", path=path + "/type")


def decode_results(document: bytes | str) -> ResultSet:
    """Decode a standard SPARQL JSON results document.

    Raises DecodeError with a JSON-pointer-style path on malformed input.
    """
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"invalid JSON: {exc.msg}", path="") from exc
    if not isinstance(doc, dict):
        raise DecodeError("result document must be a JSON object", path="")
    if "head" not in doc:
        raise DecodeError("missing 'head' member", path="/head")
    head = doc["head"]
    if not isinstance(head, dict):
        raise DecodeError("'head' must be an object", path="/head")

    if "boolean" in doc:
        if not isinstance(doc["boolean"], bool):
            raise DecodeError("'boolean' must be true or false", path="/boolean")
        return ResultSet(variables=[], rows=[], boolean=doc["boolean"])

    if "results" not in doc:
        raise DecodeError("missing 'results' member", path="/results")
    variables = head.get("vars")
    if not isinstance(variables, list) or not all(isinstance(v, str) for v in variables):
        raise DecodeError("'head/vars' must be a list of names", path="/head/vars")
    bindings = doc["results"].get("bindings") if isinstance(doc["results"], dict) else None
    if not isinstance(bindings, list):
        raise DecodeError("'results/bindings' must be an array", path="/results/bindings")

    rows: list[dict[str, Term]] = []
    for i, raw_row in enumerate(bindings):
        if not isinstance(raw_row, dict):
            raise DecodeError("binding row must be an object", path=f"/results/bindings/{i}")
        row: dict[str, Term] = {}
        for var, raw in raw_row.items():
            if var not in variables:
                raise DecodeError(
                    f"row binds undeclared variable ?{var}", path=f"/results/bindings/{i}/{var}"
                )
            row[var] = _decode_binding(var, raw, f"/results/bindings/{i}/{var}")
        rows.append(row)
    return ResultSet(variables=list(variables), rows=rows)


def _encode_term(term: Term) -> dict:
    if isinstance(term, Iri):
        return {"type": "uri", "value": term.value}
    if isinstance(term, BNode):
        return {"type": "bnode", "value": term.label}
    if isinstance(term, Literal):
        out: dict = {"type": "literal", "value": term.value}
        if term.language:
            out["xml:lang"] = term.language
        elif term.datatype and term.datatype != XSD_STRING:
            out["datatype"] = term.datatype
        elif term.datatype == XSD_STRING:
            out["datatype"] = term.datatype
        return out
    raise TypeError(f"cannot encode {term!r}")


def encode_results(rs: ResultSet) -> bytes:
    """Re-encode a ResultSet into the standard JSON document."""
    if rs.is_boolean:
        doc = {"head": {}, "boolean": rs.boolean}
    else:
        doc = {
            "head": {"vars": list(rs.variables)},
            "results": {
                "bindings": [
                    {var: _encode_term(term) for var, term in row.items()} for row in rs.rows
                ]
            },
        }
    return json.dumps(doc, ensure_ascii=False).encode("utf-8")
