"""In-process SPARQL protocol endpoint over a TripleStore.

Speaks the same wire protocol the gateway uses against remote endpoints
(GET with a ``query`` parameter, form-encoded POST, JSON results), so
tests and demos exercise the full HTTP path.
"""

from __future__ import annotations

import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from ..errors import CqdashError
from .parser import parse_query
from .results import MEDIA_TYPE, encode_results
from .store import TripleStore


class _Handler(BaseHTTPRequestHandler):
    store: TripleStore  # set by the server factory

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _run(self, query_text: str | None):
        if not query_text:
            self._error(400, "missing query parameter")
            return
        try:
            parsed = parse_query(query_text)
            result = self.server.store.query(parsed)  # type: ignore[attr-defined]
        except CqdashError as exc:
            self._error(400, f"{exc.code}: {exc.message}")
            return
        body = encode_results(result)
        self.send_response(200)
        self.send_header("Content-Type", MEDIA_TYPE)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, message: str):
        body = message.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "text/plain; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        params = parse_qs(urlparse(self.path).query)
        self._run(params.get("query", [None])[0])

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length).decode("utf-8")
        content_type = self.headers.get("Content-Type", "")
        if content_type.startswith("application/sparql-query"):
            self._run(raw)
        else:
            params = parse_qs(raw)
            self._run(params.get("query", [None])[0])


class _Server(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr, store: TripleStore):
        super().__init__(addr, _Handler)
        self.store = store


class FixtureEndpoint:
    """Threaded fixture endpoint; use as a context manager or start/stop."""

    def __init__(self, store: TripleStore, host: str = "127.0.0.1", port: int = 0):
        self.store = store
        self._server = _Server((host, port), store)
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/sparql"

    def start(self) -> "FixtureEndpoint":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def __enter__(self) -> "FixtureEndpoint":
        return self.start()

    def __exit__(self, *exc):
        self.stop()
