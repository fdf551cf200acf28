"""Acceptance gate: one test per primary criterion, each printing a single
pass/fail line with its runtime against the stated budget.

All runs use the bundled fixture endpoint and the scripted mock provider;
no network or real LLM is involved.
"""

import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

import pytest

from cqdash.catalog import CatalogRegistry
from cqdash.llm.providers import LlmConfig, MockProvider, ProviderRegistry
from cqdash.pipeline import Pipeline, STAGES
from cqdash.schema import SchemaRegistry
from cqdash.service import RateLimiter
from cqdash.sessions import (
    FileBackend,
    SessionStore,
    export_bundle,
    import_bundle,
    normalize_bundle,
)
from cqdash.sparql.client import EndpointConfig, SparqlClient
from cqdash.sparql.consistency import check_schema_consistency
from cqdash.sparql.fixture_server import FixtureEndpoint
from cqdash.sparql.parser import parse_query
from cqdash.sparql.results import decode_results, encode_results
from cqdash.sparql.store import TripleStore
from cqdash.sparql.terms import Iri
from cqdash.sparql.turtle import parse_turtle
from cqdash.tabular import aggregate

from conftest import USE_CASES, decade_transcript, read_fixture
from test_sparql_results import CONFORMANCE_DOCS
from test_tabular import make_dataset, oracle_aggregate, random_dataset

CFG = LlmConfig(provider_id="mock", model_id="mock-model")


@contextmanager
def criterion(capsys, name, budget_s):
    started = time.perf_counter()
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"[FAIL] {name} ({time.perf_counter() - started:.2f}s, budget {budget_s}s)")
        raise
    elapsed = time.perf_counter() - started
    with capsys.disabled():
        print(f"[PASS] {name} ({elapsed:.2f}s, budget {budget_s}s)")
    assert elapsed < budget_s, f"{name} exceeded its {budget_s}s budget ({elapsed:.2f}s)"


def build_env(mock_responses=None):
    schemas = SchemaRegistry()
    catalogs = CatalogRegistry(schemas)
    stores = {}
    for uc in USE_CASES:
        schemas.register(read_fixture("schemas", f"{uc}.json"))
        catalogs.register(read_fixture("catalogs", f"{uc}.json"))
        store = TripleStore()
        store.load_turtle(read_fixture("graphs", f"{uc}.ttl"))
        stores[uc] = store
    mock = MockProvider({"responses": mock_responses or []})
    registry = ProviderRegistry()
    registry.register("mock", mock)
    sessions = SessionStore()
    servers = {uc: FixtureEndpoint(stores[uc]).start() for uc in USE_CASES}
    clients = {uc: SparqlClient(EndpointConfig(url=servers[uc].url)) for uc in USE_CASES}
    pipeline = Pipeline(schemas, catalogs, sessions, clients, registry)
    return schemas, catalogs, sessions, pipeline, mock, servers


def stop(servers):
    for server in servers.values():
        server.stop()


def test_catalog_fidelity(capsys):
    """16 + 10 curated pairs load, parse, and check clean against their schemas."""
    with criterion(capsys, "catalog fidelity (16 + 10 curated pairs)", 5.0):
        schemas = SchemaRegistry()
        catalogs = CatalogRegistry(schemas)
        for uc in USE_CASES:
            schemas.register(read_fixture("schemas", f"{uc}.json"))
            catalogs.register(read_fixture("catalogs", f"{uc}.json"))
        assert len(catalogs.list_questions("kg-empire")) == 16
        assert len(catalogs.list_questions("nlp4re-id-card")) == 10
        for uc in USE_CASES:
            schema = schemas.get(uc)
            for q in catalogs.list_questions(uc):
                parsed = parse_query(q.sparql_text)  # must parse
                assert check_schema_consistency(parsed, schema) == [], q.id


def test_workflow_1_all_curated_questions(capsys):
    """All 26 curated runs complete over HTTP with zero LLM calls."""
    with criterion(capsys, "workflow 1 end-to-end (26 curated, 0 LLM calls)", 30.0):
        _, catalogs, sessions, pipeline, mock, servers = build_env()
        try:
            sid = sessions.create_session()
            for uc in USE_CASES:
                for q in catalogs.list_questions(uc):
                    outcome = pipeline.run_curated(uc, q.index, sid)
                    assert outcome.status == "complete", (q.id, outcome.error)
                    assert [s.stage for s in outcome.steps] == list(STAGES), q.id
            assert mock.calls == []
        finally:
            stop(servers)


def brute_force_decades():
    """Independent oracle: nested loops over raw fixture triples."""
    triples = parse_turtle(read_fixture("graphs", "kg-empire.ttl"))
    emp = "https://example.org/kg-empire#"
    counts = {}
    for s1, p1, o1 in triples:
        if p1 != Iri(emp + "hasStudy"):
            continue
        for s2, p2, o2 in triples:
            if s2 == s1 and p2 == Iri(emp + "hasYear"):
                decade = (int(o2.value) // 10) * 10
                label = f"{decade}s"
                counts[label] = counts.get(label, 0) + 1
    return counts


def test_workflow_2_determinism(capsys):
    """The decade question matches the brute-force oracle with identical traces ×5."""
    with criterion(capsys, "workflow 2 determinism (decade counts, 5 identical traces)", 5.0):
        oracle = brute_force_decades()
        assert oracle == {"1990s": 1, "2000s": 2, "2010s": 3, "2020s": 1}
        _, _, sessions, pipeline, mock, servers = build_env()
        try:
            sid = sessions.create_session()
            digests = []
            for _ in range(5):
                mock.reset()
                mock.responses = decade_transcript()["responses"]
                outcome = pipeline.run_custom(
                    "Number of empirical studies per decade", "kg-empire", sid, CFG
                )
                assert outcome.status == "complete", outcome.error
                got = {f"{int(row[0])}s": row[1] for row in outcome.dataset.rows}
                assert got == oracle
                digests.append(outcome.trace_digest())
            assert len(set(digests)) == 1, digests
        finally:
            stop(servers)


def test_repair_loop(capsys):
    """Invalid-then-valid succeeds on attempt 2; always-invalid stops after 3."""
    with criterion(capsys, "repair loop (attempt-2 success, 3-attempt exhaustion)", 2.0):
        bad = "```sparql\nPREFIX emp: <https://example.org/kg-empire#>\nSELECT ?x WHERE { ?x emp:fabricated ?y . }\n```"
        good = decade_transcript()["responses"]
        _, _, sessions, pipeline, mock, servers = build_env()
        try:
            sid = sessions.create_session()
            mock.responses = [bad] + good
            outcome = pipeline.run_custom("decades", "kg-empire", sid, CFG)
            assert outcome.status == "complete", outcome.error
            attempts = [h for h in outcome.query_history if h.get("source") == "llm"]
            assert [a["attempt"] for a in attempts] == [1, 2]

            mock.reset()
            mock.responses = [bad] * 6
            failed = pipeline.run_custom("still decades", "kg-empire", sid, CFG)
            assert failed.status == "failed"
            assert failed.failed_stage == "select-or-generate"
            assert len(mock.calls) == 3
            history = failed.query_history[-1]["diagnostics"]
            assert len(history) >= 3 and all("fabricated" in d for d in history)
        finally:
            stop(servers)


def test_export_import_round_trip(capsys):
    """20 randomized outcomes re-export digest-equal; tampering is caught."""
    with criterion(capsys, "export/import round trip (20 outcomes + tamper)", 10.0):
        from cqdash.errors import IntegrityError

        schemas, catalogs, sessions, pipeline, mock, servers = build_env()
        registered = {u[0]: u[2] for u in schemas.list_use_cases()}
        rng = random.Random(20260823)
        try:
            sid = sessions.create_session()
            for _ in range(20):
                uc = rng.choice(USE_CASES)
                index = rng.randint(1, len(catalogs.list_questions(uc)))
                outcome = pipeline.run_curated(uc, index, sid)
                bundle = export_bundle(sessions, sid, outcome.outcome_event_id)
                sid2 = import_bundle(sessions, bundle, registered)
                imported = [e for e in sessions.events(sid2) if e.kind == "outcome"][-1]
                bundle2 = export_bundle(sessions, sid2, imported.event_id)
                assert normalize_bundle(bundle) == normalize_bundle(bundle2), (uc, index)

            tampered = json.loads(json.dumps(bundle))
            cell_holder = tampered["dataset"]["data"]
            column = next(iter(cell_holder))
            cell_holder[column].append("injected")
            with pytest.raises(IntegrityError):
                import_bundle(sessions, tampered, registered)
        finally:
            stop(servers)


def test_rate_limiter_exactness(capsys):
    """40 concurrent default-model requests: exactly 25 allowed, 15 denied."""
    with criterion(capsys, "rate limiter exactness (25/15 under concurrency)", 5.0):
        limiter = RateLimiter(limit=25, default_model="gpt-4o-mini")
        with ThreadPoolExecutor(40) as ex:
            decisions = list(
                ex.map(lambda _: limiter.check_and_consume("1.2.3.4", "gpt-4o-mini"), range(40))
            )
        assert sum(d.allowed for d in decisions) == 25
        assert sum(not d.allowed for d in decisions) == 15
        assert all(
            limiter.check_and_consume("1.2.3.4", "other-model").allowed for _ in range(50)
        )


def test_results_decoding_conformance(capsys):
    """≥10 standard result documents decode losslessly (re-encode equality)."""
    with criterion(capsys, f"results decoding conformance ({len(CONFORMANCE_DOCS)} documents)", 1.0):
        assert len(CONFORMANCE_DOCS) >= 10
        for doc in CONFORMANCE_DOCS:
            rs = decode_results(json.dumps(doc))
            re_encoded = json.loads(encode_results(rs))
            assert decode_results(json.dumps(re_encoded)) == rs


def test_aggregation_oracle_equivalence(capsys):
    """aggregate == brute-force nested loops on 200 random datasets."""
    with criterion(capsys, "aggregation oracle equivalence (200 datasets, all kinds)", 10.0):
        rng = random.Random(1234)
        plans = [("count", None, None), ("count", None, "decade"),
                 ("sum", "m", None), ("avg", "m", None), ("min", "m", None), ("max", "m", None)]
        for i in range(200):
            dataset = random_dataset(rng)
            measure, mcol, binning = plans[i % len(plans)]
            group = "year" if binning else "g"
            got = aggregate(dataset, group, measure, measure_column=mcol, binning=binning)
            expected = oracle_aggregate(dataset, group, measure, measure_column=mcol, binning=binning)
            got_map = {
                k: (pytest.approx(v) if isinstance(v, float) else v) for k, v in got.rows
            }
            assert got_map == expected, (i, measure, binning)


def test_append_only_history_with_restart(capsys):
    """≥1000 random ops never reorder/delete; restart recovers identical state."""
    with criterion(capsys, "append-only history (1000 ops + restart recovery)", 30.0):
        from test_sessions import random_ops

        def snapshot(store):
            return {
                sid: [(e.event_id, e.kind, e.retained, json.dumps(e.payload, sort_keys=True))
                      for e in store.events(sid)]
                for sid in store.session_ids()
            }

        import tempfile, os

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "log.jsonl")
            store = SessionStore(FileBackend(path))
            rng = random.Random(99)
            expected = random_ops(store, rng, 1000)
            for sid, ids in expected.items():
                assert [e.event_id for e in store.events(sid)] == ids
            before = snapshot(store)
            recovered = SessionStore(FileBackend(path))
            assert snapshot(recovered) == before
