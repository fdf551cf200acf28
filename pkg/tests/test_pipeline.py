"""Five-stage orchestration: curated runs, custom runs with repair,
refinement, trace digests, and session event wiring."""

import pytest

from cqdash.catalog import CatalogRegistry
from cqdash.errors import RefinementError
from cqdash.llm.providers import LlmConfig, MockProvider, ProviderRegistry
from cqdash.pipeline import Pipeline, STAGES
from cqdash.schema import SchemaRegistry
from cqdash.sessions import SessionStore
from cqdash.sparql.client import EndpointConfig, SparqlClient
from cqdash.sparql.fixture_server import FixtureEndpoint
from cqdash.sparql.store import TripleStore

from conftest import DECADE_QUERY, USE_CASES, decade_transcript, read_fixture

CFG = LlmConfig(provider_id="mock", model_id="mock-model")


@pytest.fixture
def env(triple_stores):
    schemas = SchemaRegistry()
    catalogs = CatalogRegistry(schemas)
    for uc in USE_CASES:
        schemas.register(read_fixture("schemas", f"{uc}.json"))
        catalogs.register(read_fixture("catalogs", f"{uc}.json"))
    mock = MockProvider()
    registry = ProviderRegistry()
    registry.register("mock", mock)
    sessions = SessionStore()
    servers = [FixtureEndpoint(triple_stores[uc]).start() for uc in USE_CASES]
    clients = {
        uc: SparqlClient(EndpointConfig(url=server.url))
        for uc, server in zip(USE_CASES, servers)
    }
    pipeline = Pipeline(schemas, catalogs, sessions, clients, registry)
    sid = sessions.create_session()
    yield pipeline, sessions, mock, sid
    for server in servers:
        server.stop()


def script(mock, responses):
    mock.reset()
    mock.responses = list(responses)


def test_curated_run_five_stages_no_llm(env):
    pipeline, sessions, mock, sid = env
    outcome = pipeline.run_curated("kg-empire", 12, sid)
    assert outcome.status == "complete"
    assert [s.stage for s in outcome.steps] == list(STAGES)
    assert mock.calls == []
    assert all(s.llm_calls == () for s in outcome.steps)
    kinds = [e.kind for e in sessions.events(sid)]
    assert kinds == ["question-submitted", "outcome"]


def test_curated_decade_counts(env):
    pipeline, _, _, sid = env
    outcome = pipeline.run_curated("kg-empire", 12, sid)
    assert dict(outcome.dataset.rows) == {1990: 1, 2000: 2, 2010: 3, 2020: 1}
    assert outcome.interpretation.generator == "curated"


def test_curated_ask_question_tabulates_boolean(env):
    pipeline, _, _, sid = env
    outcome = pipeline.run_curated("nlp4re-id-card", 9, sid)
    assert outcome.result.is_boolean and outcome.result.boolean is True
    assert outcome.dataset.rows == ((True,),)


def test_unknown_question_fails_before_any_stage(env):
    pipeline, sessions, _, sid = env
    from cqdash.errors import NotFoundError

    with pytest.raises(NotFoundError):
        pipeline.run_curated("kg-empire", 99, sid)
    assert sessions.events(sid) == []


def test_custom_run_complete(env):
    pipeline, sessions, mock, sid = env
    script(mock, decade_transcript()["responses"])
    outcome = pipeline.run_custom("Number of empirical studies per decade", "kg-empire", sid, CFG)
    assert outcome.status == "complete"
    assert dict(outcome.dataset.rows) == {1990: 1, 2000: 2, 2010: 3, 2020: 1}
    assert outcome.chart.kind == "bar"
    assert outcome.interpretation.generator == "llm:mock-model"
    assert [s.stage for s in outcome.steps] == list(STAGES)
    # every LLM call attributed to exactly one step
    assert sum(len(s.llm_calls) for s in outcome.steps) == len(mock.calls) == 3
    kinds = [e.kind for e in sessions.events(sid)]
    assert kinds.count("llm-exchange") == 3


def test_custom_trace_digest_deterministic(env):
    pipeline, _, mock, sid = env
    digests = set()
    for _ in range(3):
        script(mock, decade_transcript()["responses"])
        outcome = pipeline.run_custom("Number of empirical studies per decade", "kg-empire", sid, CFG)
        digests.add(outcome.trace_digest())
    assert len(digests) == 1


def test_repair_bad_then_good(env):
    pipeline, _, mock, sid = env
    script(mock, [
        "```sparql\nPREFIX emp: <https://example.org/kg-empire#>\n"
        "SELECT ?x WHERE { ?x emp:noSuchPredicate ?y . }\n```",
        "```sparql\n" + DECADE_QUERY + "\n```",
        '{"kind": "bar", "x": "decade", "y": "studies", "title": "t"}',
        "Summary.\n\nDetail.",
    ])
    outcome = pipeline.run_custom("per decade", "kg-empire", sid, CFG)
    assert outcome.status == "complete"
    attempts = [h for h in outcome.query_history if h.get("source") == "llm"]
    assert [a["attempt"] for a in attempts] == [1, 2]
    assert any("noSuchPredicate" in d for d in attempts[1]["diagnostics"])


def test_repair_exhaustion_after_three_attempts(env):
    pipeline, _, mock, sid = env
    bad = "```sparql\nSELECT ?x WHERE { ?x <https://example.org/kg-empire#bad> ?y }\n```"
    script(mock, [bad] * 6)
    outcome = pipeline.run_custom("hopeless", "kg-empire", sid, CFG)
    assert outcome.status == "failed"
    assert outcome.failed_stage == "select-or-generate"
    assert len(mock.calls) == 3  # exactly three generation attempts
    failure = outcome.query_history[-1]
    assert len(failure["diagnostics"]) >= 3  # full diagnostic history


def test_execute_failure_marks_stage(env, triple_stores):
    pipeline, _, _, sid = env
    pipeline.clients["kg-empire"] = SparqlClient(
        EndpointConfig(url="http://127.0.0.1:1/sparql", max_retries=0, timeout=0.3)
    )
    outcome = pipeline.run_curated("kg-empire", 1, sid)
    assert outcome.status == "failed" and outcome.failed_stage == "execute"
    stages = [s.stage for s in outcome.steps]
    assert stages == ["select-or-generate", "execute"]  # trace stops at the failure


def test_refine_manual_query_reruns_downstream(env):
    pipeline, _, mock, sid = env
    outcome = pipeline.run_curated("kg-empire", 2, sid)
    new_query = (
        "PREFIX emp: <https://example.org/kg-empire#>\n"
        "SELECT (COUNT(?study) AS ?studies) WHERE { ?study emp:hasParticipantCount ?n . }"
    )
    refined = pipeline.refine(sid, outcome.outcome_event_id, new_query, "query", "manual")
    assert refined.status == "complete"
    assert refined.query_text == new_query
    assert refined.dataset.rows[0][0] == 5  # studies stating a participant count
    assert refined.outcome_event_id != outcome.outcome_event_id


def test_refine_invalid_manual_query_keeps_original(env):
    pipeline, sessions, _, sid = env
    outcome = pipeline.run_curated("kg-empire", 1, sid)
    before = len(sessions.events(sid))
    with pytest.raises(RefinementError) as exc_info:
        pipeline.refine(sid, outcome.outcome_event_id, "SELECT ?x WHERE {", "query", "manual")
    assert exc_info.value.diagnostics
    events = sessions.events(sid)
    # the refinement request is logged, but no new outcome was appended
    assert [e.kind for e in events[before:]] == ["refinement"]


def test_refine_prompt_interpretation(env):
    pipeline, _, mock, sid = env
    outcome = pipeline.run_curated("kg-empire", 3, sid)
    script(mock, ["Shorter take.\n\nLonger detail."])
    refined = pipeline.refine(
        sid, outcome.outcome_event_id, "make it shorter", "interpretation", "prompt", CFG
    )
    assert refined.interpretation.summary == "Shorter take."
    assert refined.interpretation.generator == "llm:mock-model"
    # instruction reached the model
    assert any("make it shorter" in m.content for m in mock.calls[0].messages)


def test_refine_manual_chart_validates(env):
    pipeline, _, _, sid = env
    outcome = pipeline.run_curated("kg-empire", 4, sid)
    with pytest.raises(RefinementError):
        pipeline.refine(
            sid, outcome.outcome_event_id,
            '{"kind": "pie", "x": {"column": "ghost"}, "y": {"column": "studies"}}',
            "chart", "manual",
        )
    good = '{"kind": "bar", "x": {"column": "method"}, "y": {"column": "studies"}, "title": "m"}'
    refined = pipeline.refine(sid, outcome.outcome_event_id, good, "chart", "manual")
    assert refined.chart.kind == "bar" and refined.chart.title == "m"


def test_all_curated_questions_run_clean(env):
    pipeline, _, mock, sid = env
    for uc in USE_CASES:
        for index in range(1, (17 if uc == "kg-empire" else 11)):
            outcome = pipeline.run_curated(uc, index, sid)
            assert outcome.status == "complete", (uc, index, outcome.error)
    assert mock.calls == []
