"""Schema-consistency checking of parsed queries.

Only IRIs under the schema's declared prefix namespaces are checked;
standard vocabularies (rdf, rdfs, xsd, owl) are always exempt so queries
may freely use e.g. rdf:type without tripping the check.
"""

from __future__ import annotations

from ..schema import GraphSchema, LITERAL_DATATYPES
from .parser import ParsedQuery

EXEMPT_NAMESPACES = (
    "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
    "http://www.w3.org/2000/01/rdf-schema#",
    "http://www.w3.org/2001/XMLSchema#",
    "http://www.w3.org/2002/07/owl#",
)


def check_schema_consistency(q: ParsedQuery, s: GraphSchema) -> list[str]:
    """One inconsistency message per referenced IRI unknown to the schema."""
    known = s.class_iris() | s.predicate_iris() | LITERAL_DATATYPES
    checked_namespaces = [
        ns for ns in s.declared_namespaces() if not ns.startswith(EXEMPT_NAMESPACES)
    ]
    inconsistencies = []
    for iri in sorted(q.referenced_iris):
        if iri in known or iri.startswith(EXEMPT_NAMESPACES):
            continue
        if any(iri.startswith(ns) for ns in checked_namespaces):
            inconsistencies.append(
                f"IRI <{iri}> is not declared as a class or predicate of use case {s.use_case_id!r}"
            )
    return inconsistencies
