"""HTTP execution of queries against a SPARQL 1.1 protocol endpoint.

Transient failures (timeouts, connection errors, 5xx) are retried with
capped exponential backoff; 4xx responses are never retried so the repair
loop sees the endpoint's diagnosis. An optional TTL cache keyed by
(query text, endpoint, schema fingerprint) is off by default.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import httpx

from ..errors import EndpointStatusError, EndpointUnreachableError, PreconditionError
from .parser import ParsedQuery
from .results import MEDIA_TYPE, ResultSet, decode_results

BACKOFF_BASE = 0.2  # seconds; doubles per attempt
BACKOFF_CAP = 2.0


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    timeout: float = 30.0
    max_retries: int = 2
    user_agent: str = "cqdash/0.1"
    method: str = "GET"  # GET with query parameter, or form-encoded POST
    backoff_base: float = BACKOFF_BASE

    def __post_init__(self):
        if self.timeout <= 0:
            raise PreconditionError("endpoint timeout must be positive")
        if self.max_retries < 0:
            raise PreconditionError("max_retries must be non-negative")
        if self.method not in ("GET", "POST"):
            raise PreconditionError(f"unsupported protocol method {self.method!r}")


def _request_once(text: str, ep: EndpointConfig) -> httpx.Response:
    headers = {"Accept": MEDIA_TYPE, "User-Agent": ep.user_agent}
    with httpx.Client(timeout=ep.timeout) as client:
        if ep.method == "GET":
            return client.get(ep.url, params={"query": text}, headers=headers)
        return client.post(ep.url, data={"query": text}, headers=headers)


def execute(q: ParsedQuery, ep: EndpointConfig) -> ResultSet:
    """Run a parsed query against the endpoint and decode the result."""
    attempts = ep.max_retries + 1
    last_exc: Exception | None = None
    for attempt in range(attempts):
        if attempt:
            time.sleep(min(ep.backoff_base * (2 ** (attempt - 1)), BACKOFF_CAP))
        try:
            response = _request_once(q.text, ep)
        except httpx.HTTPError as exc:
            last_exc = exc
            continue
        if 200 <= response.status_code < 300:
            return decode_results(response.content)
        if response.status_code >= 500:
            last_exc = EndpointStatusError(
                f"endpoint returned {response.status_code}",
                status=response.status_code,
                body_snippet=response.text[:500],
            )
            continue
        raise EndpointStatusError(
            f"endpoint rejected query with {response.status_code}",
            status=response.status_code,
            body_snippet=response.text[:500],
        )
    if isinstance(last_exc, EndpointStatusError):
        raise last_exc
    raise EndpointUnreachableError(
        f"endpoint {ep.url} unreachable after {attempts} attempts: {last_exc}"
    )


class SparqlClient:
    """Endpoint wrapper with an optional result cache.

    ``cache_ttl`` of 0 disables caching entirely.
    """

    def __init__(self, config: EndpointConfig, cache_ttl: float = 0.0):
        self.config = config
        self.cache_ttl = cache_ttl
        self._cache: dict[tuple, tuple[float, ResultSet]] = {}
        self._lock = threading.Lock()

    def execute(self, q: ParsedQuery, schema_fingerprint: str = "") -> ResultSet:
        if self.cache_ttl <= 0:
            return execute(q, self.config)
        key = (q.text, self.config.url, schema_fingerprint)
        now = time.monotonic()
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None and now - hit[0] < self.cache_ttl:
                return hit[1]
        result = execute(q, self.config)
        with self._lock:
            self._cache.setdefault(key, (now, result))
            if self._cache[key][1] is not result and now - self._cache[key][0] >= self.cache_ttl:
                self._cache[key] = (now, result)
        return result
