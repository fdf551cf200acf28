"""RDF term model shared by the parser, result decoder, and triple store."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

XSD = "http://www.w3.org/2001/XMLSchema#"
XSD_STRING = XSD + "string"
XSD_INTEGER = XSD + "integer"
XSD_DECIMAL = XSD + "decimal"
XSD_DOUBLE = XSD + "double"
XSD_BOOLEAN = XSD + "boolean"
XSD_DATE = XSD + "date"
XSD_GYEAR = XSD + "gYear"

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"


@dataclass(frozen=True)
class Iri:
    value: str

    def n3(self) -> str:
        return f"<{self.value}>"


@dataclass(frozen=True)
class Literal:
    value: str
    datatype: str | None = None  # None means plain / xsd:string
    language: str | None = None

    def n3(self) -> str:
        escaped = (
            self.value.replace("\\", "\\\\")
            .replace('"', '\\"')
            .replace("\n", "\\n")
            .replace("\r", "\\r")
            .replace("\t", "\\t")
        )
        if self.language:
            return f'"{escaped}"@{self.language}'
        if self.datatype and self.datatype != XSD_STRING:
            return f'"{escaped}"^^<{self.datatype}>'
        return f'"{escaped}"'

    def as_python(self):
        """Best-effort native value; falls back to the lexical form."""
        dt = self.datatype
        try:
            if dt == XSD_INTEGER or (dt is not None and dt.endswith(("#int", "#long"))):
                return int(self.value)
            if dt in (XSD_DECIMAL, XSD_DOUBLE) or (dt is not None and dt.endswith("#float")):
                return float(self.value)
            if dt == XSD_BOOLEAN:
                return self.value.strip().lower() in ("true", "1")
        except ValueError:
            pass
        return self.value


@dataclass(frozen=True)
class BNode:
    label: str

    def n3(self) -> str:
        return f"_:{self.label}"


Term = Union[Iri, Literal, BNode]


def typed_literal(value) -> Literal:
    """Wrap a Python value as an appropriately-typed literal."""
    if isinstance(value, bool):
        return Literal("true" if value else "false", datatype=XSD_BOOLEAN)
    if isinstance(value, int):
        return Literal(str(value), datatype=XSD_INTEGER)
    if isinstance(value, float):
        if value.is_integer():
            return Literal(str(int(value)), datatype=XSD_DECIMAL)
        return Literal(repr(value), datatype=XSD_DECIMAL)
    return Literal(str(value))
