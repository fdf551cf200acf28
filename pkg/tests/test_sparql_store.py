"""In-memory evaluator behavior over hand-built graphs and the fixtures."""

import pytest

from cqdash.sparql.parser import parse_query
from cqdash.sparql.store import TripleStore
from cqdash.sparql.terms import Iri, Literal, typed_literal

EX = "https://example.org/t#"


def iri(local):
    return Iri(EX + local)


@pytest.fixture
def store():
    s = TripleStore()
    rdf_type = Iri("http://www.w3.org/1999/02/22-rdf-syntax-ns#type")
    for i, (year, name) in enumerate([(1998, "alpha"), (2003, "beta"), (2010, "gamma")]):
        paper = iri(f"paper{i}")
        s.add(paper, rdf_type, iri("Paper"))
        s.add(paper, iri("year"), typed_literal(year))
        s.add(paper, iri("name"), Literal(name))
    s.add(iri("paper0"), iri("cites"), iri("paper1"))
    return s


def run(store, text):
    return store.query(parse_query(text))


def test_bgp_join(store):
    rs = run(store, "SELECT ?n WHERE { ?p a <%sPaper> ; <%sname> ?n . }" % (EX, EX))
    assert sorted(r["n"].value for r in rs.rows) == ["alpha", "beta", "gamma"]


def test_filter_comparison(store):
    rs = run(store, "SELECT ?p WHERE { ?p <%syear> ?y . FILTER(?y > 2000) }" % EX)
    assert len(rs.rows) == 2


def test_optional_keeps_unmatched(store):
    rs = run(store, "SELECT ?p ?c WHERE { ?p a <%sPaper> . OPTIONAL { ?p <%scites> ?c } }" % (EX, EX))
    assert len(rs.rows) == 3
    unbound = [r for r in rs.rows if "c" not in r]
    assert len(unbound) == 2


def test_negation_via_optional_bound(store):
    rs = run(
        store,
        "SELECT ?p WHERE { ?p a <%sPaper> . OPTIONAL { ?p <%scites> ?c } FILTER(!BOUND(?c)) }" % (EX, EX),
    )
    assert len(rs.rows) == 2


def test_bind_and_arithmetic(store):
    rs = run(store, "SELECT ?d WHERE { ?p <%syear> ?y . BIND(FLOOR(?y / 10) * 10 AS ?d) }" % EX)
    decades = sorted(r["d"].as_python() for r in rs.rows)
    assert decades == [1990, 2000, 2010]


def test_values_join(store):
    rs = run(
        store,
        "SELECT ?n WHERE { VALUES ?p { <%spaper0> <%spaper2> } ?p <%sname> ?n }" % (EX, EX, EX),
    )
    assert sorted(r["n"].value for r in rs.rows) == ["alpha", "gamma"]


def test_group_by_count(store):
    rs = run(
        store,
        "SELECT ?y (COUNT(?p) AS ?n) WHERE { ?p <%syear> ?y } GROUP BY ?y ORDER BY ?y" % EX,
    )
    assert [(r["y"].as_python(), r["n"].as_python()) for r in rs.rows] == [
        (1998, 1), (2003, 1), (2010, 1)
    ]


def test_implicit_group_aggregates(store):
    rs = run(store, "SELECT (MIN(?y) AS ?lo) (MAX(?y) AS ?hi) (AVG(?y) AS ?m) WHERE { ?p <%syear> ?y }" % EX)
    row = rs.rows[0]
    assert row["lo"].as_python() == 1998
    assert row["hi"].as_python() == 2010
    assert row["m"].as_python() == pytest.approx((1998 + 2003 + 2010) / 3)


def test_count_star_and_distinct(store):
    rs = run(store, "SELECT (COUNT(*) AS ?n) WHERE { ?s ?p ?o }")
    assert rs.rows[0]["n"].as_python() == len(store)
    rs = run(store, "SELECT (COUNT(DISTINCT ?p) AS ?n) WHERE { ?s ?p ?o }")
    assert rs.rows[0]["n"].as_python() == 4  # type, year, name, cites


def test_order_limit_offset(store):
    rs = run(store, "SELECT ?n WHERE { ?p <%sname> ?n } ORDER BY DESC(?n) LIMIT 2 OFFSET 1" % EX)
    assert [r["n"].value for r in rs.rows] == ["beta", "alpha"]


def test_ask_true_false(store):
    assert run(store, "ASK { ?p <%syear> 1998 }" % EX).boolean is True
    assert run(store, "ASK { ?p <%syear> 1000 }" % EX).boolean is False


def test_filter_error_is_false_not_crash(store):
    # comparing a string to a number is a type error -> row dropped
    rs = run(store, "SELECT ?p WHERE { ?p <%sname> ?n . FILTER(?n > 5) }" % EX)
    assert rs.rows == []


def test_string_functions(store):
    rs = run(
        store,
        'SELECT ?n WHERE { ?p <%sname> ?n . FILTER(STRSTARTS(UCASE(?n), "A") || CONTAINS(?n, "mm")) }' % EX,
    )
    assert sorted(r["n"].value for r in rs.rows) == ["alpha", "gamma"]


def test_turtle_loading_matches_fixture_counts(triple_stores):
    assert len(triple_stores["kg-empire"]) == 96
    assert len(triple_stores["nlp4re-id-card"]) == 77


def test_turtle_literals_parse_types():
    store = TripleStore()
    store.load_turtle(
        '@prefix ex: <%s> .\nex:a ex:n 5 ; ex:f 1.5 ; ex:b true ; ex:s "hi"@en .' % EX
    )
    rs = store.query(parse_query("SELECT ?o WHERE { <%sa> <%sn> ?o }" % (EX, EX)))
    assert rs.rows[0]["o"].as_python() == 5
