"""Namespace-scoped schema-consistency checking."""

import pytest

from cqdash.schema import load_schema
from cqdash.sparql.consistency import check_schema_consistency
from cqdash.sparql.parser import parse_query

EX = "https://example.org/c#"

SCHEMA = load_schema({
    "version": 1,
    "use_case_id": "c",
    "label": "C",
    "prefixes": {"ex": EX},
    "classes": [{"iri": "ex:Paper", "label": "Paper"}],
    "predicates": [
        {"iri": "ex:hasYear", "label": "", "domain": "ex:Paper",
         "range": "http://www.w3.org/2001/XMLSchema#integer"},
    ],
})


def check(text):
    return check_schema_consistency(parse_query(text), SCHEMA)


def test_consistent_query_has_no_violations():
    assert check("SELECT ?p WHERE { ?p a <%sPaper> ; <%shasYear> ?y . }" % (EX, EX)) == []


def test_unknown_iri_in_declared_namespace_is_flagged():
    violations = check("SELECT ?p WHERE { ?p <%snoSuchPredicate> ?y . }" % EX)
    assert len(violations) == 1
    assert "noSuchPredicate" in violations[0]


def test_foreign_namespace_iris_are_not_our_business():
    assert check("SELECT ?p WHERE { ?p <https://other.org/x#whatever> ?y . }") == []


def test_rdf_and_xsd_vocabulary_exempt():
    text = (
        "PREFIX rdf: <http://www.w3.org/1999/02/22-rdf-syntax-ns#>\n"
        "SELECT ?p WHERE { ?p rdf:type <%sPaper> . "
        'FILTER(?p != "x"^^<http://www.w3.org/2001/XMLSchema#string>) }' % EX
    )
    assert check(text) == []


def test_violations_are_sorted_and_deterministic():
    text = "SELECT ?p WHERE { ?p <%szzz> ?a ; <%saaa> ?b . }" % (EX, EX)
    first = check(text)
    assert first == sorted(first)
    assert first == check(text)


def test_adding_schema_terms_never_adds_violations():
    """Monotonicity: a larger schema can only shrink the violation set."""
    text = "SELECT ?p WHERE { ?p <%snewPred> ?y ; <%shasYear> ?z . }" % (EX, EX)
    before = check_schema_consistency(parse_query(text), SCHEMA)
    bigger = load_schema({
        "version": 1, "use_case_id": "c", "label": "C", "prefixes": {"ex": EX},
        "classes": [{"iri": "ex:Paper", "label": "Paper"}],
        "predicates": [
            {"iri": "ex:hasYear", "label": "", "domain": "ex:Paper",
             "range": "http://www.w3.org/2001/XMLSchema#integer"},
            {"iri": "ex:newPred", "label": "", "domain": "*", "range": "*"},
        ],
    })
    after = check_schema_consistency(parse_query(text), bigger)
    assert set(after) <= set(before)
    assert after == []
