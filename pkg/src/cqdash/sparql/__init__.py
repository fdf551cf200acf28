from .terms import BNode, Iri, Literal, Term
from .results import ResultSet, decode_results, encode_results
from .parser import ParsedQuery, parse_query, serialize_query
from .consistency import check_schema_consistency
from .client import EndpointConfig, SparqlClient, execute
from .store import TripleStore
from .turtle import parse_turtle
from .fixture_server import FixtureEndpoint

__all__ = [
    "BNode",
    "Iri",
    "Literal",
    "Term",
    "ResultSet",
    "decode_results",
    "encode_results",
    "ParsedQuery",
    "parse_query",
    "serialize_query",
    "check_schema_consistency",
    "EndpointConfig",
    "SparqlClient",
    "execute",
    "TripleStore",
    "parse_turtle",
    "FixtureEndpoint",
]
