import importlib.resources as ir

import pytest

from cqdash.catalog import CatalogRegistry
from cqdash.schema import SchemaRegistry
from cqdash.sparql.store import TripleStore

FIXTURES = ir.files("cqdash") / "fixtures"
USE_CASES = ("kg-empire", "nlp4re-id-card")

DECADE_QUERY = """PREFIX emp: <https://example.org/kg-empire#>
SELECT ?decade (COUNT(?study) AS ?studies)
WHERE { ?paper emp:hasStudy ?study ; emp:hasYear ?year . BIND(FLOOR(?year / 10) * 10 AS ?decade) }
GROUP BY ?decade
ORDER BY ?decade"""


def read_fixture(*parts) -> str:
    node = FIXTURES
    for part in parts:
        node = node / part
    return node.read_text()


@pytest.fixture(scope="session")
def schemas() -> SchemaRegistry:
    registry = SchemaRegistry()
    for uc in USE_CASES:
        registry.register(read_fixture("schemas", f"{uc}.json"))
    return registry


@pytest.fixture(scope="session")
def catalogs(schemas) -> CatalogRegistry:
    registry = CatalogRegistry(schemas)
    for uc in USE_CASES:
        registry.register(read_fixture("catalogs", f"{uc}.json"))
    return registry


@pytest.fixture(scope="session")
def triple_stores() -> dict[str, TripleStore]:
    stores = {}
    for uc in USE_CASES:
        store = TripleStore()
        store.load_turtle(read_fixture("graphs", f"{uc}.ttl"))
        stores[uc] = store
    return stores


def decade_transcript(n_runs: int = 1) -> dict:
    """Scripted generate/suggest/interpret triple for the decade question."""
    triple = [
        "Grouping studies by decade.\n```sparql\n" + DECADE_QUERY + "\n```",
        '{"kind": "bar", "x": "decade", "y": "studies", "title": "Studies per decade"}',
        "Empirical activity peaks in the 2010s.\n\nThree of the seven studies fall in that decade.",
    ]
    return {"responses": triple * n_runs}
