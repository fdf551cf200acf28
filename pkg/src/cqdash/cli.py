"""Service entry point.

Loads schemas and catalogs from a data directory (bundled fixtures by
default), wires endpoints either from config or from the built-in
fixture triple store, and serves the HTTP API.
"""

from __future__ import annotations

import argparse
import importlib.resources
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

from .catalog import CatalogRegistry
from .errors import CqdashError, StartupError
from .llm.providers import DEFAULT_MODEL, MockProvider, build_default_registry
from .pipeline import Pipeline
from .schema import SchemaRegistry
from .service import AppState, RateLimiter, build_app, DEFAULT_RATE_LIMIT
from .sessions import FileBackend, SessionStore
from .sparql.client import EndpointConfig, SparqlClient
from .sparql.fixture_server import FixtureEndpoint
from .sparql.store import TripleStore

log = logging.getLogger("cqdash")

# Env vars holding provider credentials; referenced via api_key_ref, never logged.
SECRET_ENV_VARS = ("OPENAI_API_KEY", "GROQ_API_KEY", "MISTRAL_API_KEY", "GOOGLE_API_KEY")


def fixture_data_dir() -> Path:
    return Path(str(importlib.resources.files("cqdash") / "fixtures"))


def load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise StartupError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise StartupError(f"config file {path} is not valid JSON: {exc.msg}") from exc


def build_state(
    data_dir: Optional[str] = None,
    config: Optional[dict] = None,
    fixture_endpoint: bool = False,
    trusted_proxy: bool = False,
    session_log: Optional[str] = None,
    mock_transcript: Optional[dict] = None,
) -> tuple[AppState, list[FixtureEndpoint]]:
    """Assemble the full application; returns (state, fixture servers)."""
    config = config or {}
    base = Path(data_dir) if data_dir else fixture_data_dir()
    schema_dir = base / "schemas"
    catalog_dir = base / "catalogs"
    if not schema_dir.is_dir():
        raise StartupError(f"schema directory not found: {schema_dir}")
    if not catalog_dir.is_dir():
        raise StartupError(f"catalog directory not found: {catalog_dir}")

    schemas = SchemaRegistry()
    catalogs = CatalogRegistry(schemas)
    for path in sorted(schema_dir.glob("*.json")):
        schemas.register(path.read_text(encoding="utf-8"))
    for path in sorted(catalog_dir.glob("*.json")):
        catalogs.register(path.read_text(encoding="utf-8"))
    if not catalogs.use_case_ids():
        raise StartupError(f"no catalogs found under {catalog_dir}")
    for use_case_id in catalogs.use_case_ids():
        violations = catalogs.validate_catalog(use_case_id)
        if violations:
            raise StartupError(
                f"catalog {use_case_id!r} fails validation: " + "; ".join(violations)
            )

    endpoint_urls: dict[str, str] = dict(config.get("endpoints", {}))
    servers: list[FixtureEndpoint] = []
    if fixture_endpoint:
        graph_dir = base / "graphs"
        for use_case_id in catalogs.use_case_ids():
            graph_path = graph_dir / f"{use_case_id}.ttl"
            if not graph_path.exists():
                raise StartupError(f"fixture graph not found: {graph_path}")
            store = TripleStore()
            store.load_turtle(graph_path.read_text(encoding="utf-8"))
            server = FixtureEndpoint(store)
            server.start()
            servers.append(server)
            endpoint_urls[use_case_id] = server.url

    cache_ttl = float(config.get("cache_ttl", 0))
    clients: dict[str, SparqlClient] = {}
    for use_case_id in catalogs.use_case_ids():
        descriptor = catalogs.descriptor(use_case_id)
        url = endpoint_urls.get(descriptor.endpoint_ref)
        if url is None:
            raise StartupError(
                f"no endpoint URL configured for use case {use_case_id!r} "
                "(set one in the config file or pass --fixture-endpoint)"
            )
        clients[descriptor.endpoint_ref] = SparqlClient(
            EndpointConfig(url=url), cache_ttl=cache_ttl
        )

    registry = build_default_registry()
    transcript = mock_transcript
    transcript_path = config.get("mock_transcript")
    if transcript is None and transcript_path:
        registry.register("mock", MockProvider.from_file(transcript_path))
    elif transcript is not None:
        registry.register("mock", MockProvider(transcript))
    secrets = {name: os.environ[name] for name in SECRET_ENV_VARS if name in os.environ}
    registry.set_secrets(secrets)

    backend = FileBackend(session_log) if session_log else None
    sessions = SessionStore(backend)
    pipeline = Pipeline(schemas, catalogs, sessions, clients, registry)
    default_model = os.environ.get(
        "CQDASH_DEFAULT_MODEL", config.get("default_model", DEFAULT_MODEL)
    )
    limiter = RateLimiter(
        limit=int(config.get("rate_limit", DEFAULT_RATE_LIMIT)),
        default_model=default_model,
    )
    state = AppState(
        schemas=schemas,
        catalogs=catalogs,
        sessions=sessions,
        pipeline=pipeline,
        registry=registry,
        limiter=limiter,
        trusted_proxy=trusted_proxy,
        last_reload=_utc_now(),
        secret_values=tuple(secrets.values()),
    )
    return state, servers


def _utc_now() -> str:
    from datetime import datetime, timezone

    return datetime.now(timezone.utc).isoformat()


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="cqdash",
        description="Competency-question answering service over research knowledge graphs.",
    )
    parser.add_argument("--port", type=int, default=8000)
    parser.add_argument("--config", help="JSON config file (endpoints, limits, cache TTL)")
    parser.add_argument("--data-dir", help="directory with schemas/, catalogs/, graphs/")
    parser.add_argument(
        "--fixture-endpoint",
        action="store_true",
        help="serve the bundled fixture graphs via an embedded SPARQL endpoint",
    )
    parser.add_argument(
        "--trusted-proxy",
        action="store_true",
        help="trust X-Forwarded-For for client identity",
    )
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        session_log = config.get("session_log")
        state, servers = build_state(
            data_dir=args.data_dir,
            config=config,
            fixture_endpoint=args.fixture_endpoint,
            trusted_proxy=args.trusted_proxy,
            session_log=session_log,
        )
    except CqdashError as exc:
        print(f"startup failed: {exc.message}", file=sys.stderr)
        return 1

    app = build_app(state)
    import uvicorn

    try:
        uvicorn.run(app, host="0.0.0.0", port=args.port, log_level="info")
    finally:
        for server in servers:
            server.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
