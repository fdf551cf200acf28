"""Session persistence: append-only event log, retain/discard flags,
selective restoration, and export/import bundles.

Two storage backends ship: in-memory (tests) and a single-file JSON-lines
log (production default). Events are never deleted or reordered; the
retained flag only controls LLM context assembly, never history listings.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Iterable, Optional

from .errors import BundleVersionError, IntegrityError, NotFoundError

EVENT_KINDS = ("question-submitted", "outcome", "refinement", "llm-exchange", "note")
BUNDLE_VERSION = 1
BUNDLE_SUFFIX = ".cqbundle.json"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class InteractionEvent:
    event_id: str
    timestamp: str
    kind: str
    payload: dict
    retained: bool = True


@dataclass
class Session:
    session_id: str
    owner: str
    created_at: str
    events: list[InteractionEvent] = field(default_factory=list)


@dataclass(frozen=True)
class SessionState:
    """Reconstructed view of a session up to an event (retained only)."""

    session_id: str
    events: tuple[InteractionEvent, ...]

    def outcomes(self) -> list[dict]:
        return [e.payload for e in self.events if e.kind == "outcome"]

    def llm_context(self) -> list[dict]:
        return [e.payload for e in self.events if e.kind == "llm-exchange"]


# ---------------------------------------------------------------------------
# storage backends

class MemoryBackend:
    """No persistence; state lives only in the SessionStore."""

    def append(self, record: dict):
        pass

    def replay(self) -> Iterable[dict]:
        return ()


class FileBackend:
    """Single-file JSON-lines log; every record is flushed before return."""

    def __init__(self, path: str):
        self.path = path
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self._fh = open(path, "a", encoding="utf-8")

    def append(self, record: dict):
        self._fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def replay(self) -> Iterable[dict]:
        if not os.path.exists(self.path):
            return
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield json.loads(line)

    def close(self):
        self._fh.close()


# ---------------------------------------------------------------------------
# session store

class SessionStore:
    def __init__(self, backend=None):
        self._backend = backend or MemoryBackend()
        self._lock = threading.Lock()
        self._sessions: dict[str, Session] = {}
        for record in self._backend.replay():
            self._apply(record)

    def _apply(self, record: dict):
        op = record["op"]
        if op == "create":
            self._sessions[record["session_id"]] = Session(
                session_id=record["session_id"],
                owner=record["owner"],
                created_at=record["created_at"],
            )
        elif op == "append":
            session = self._sessions[record["session_id"]]
            session.events.append(
                InteractionEvent(
                    event_id=record["event_id"],
                    timestamp=record["timestamp"],
                    kind=record["kind"],
                    payload=record["payload"],
                    retained=record.get("retained", True),
                )
            )
        elif op == "retain":
            session = self._sessions[record["session_id"]]
            for i, event in enumerate(session.events):
                if event.event_id == record["event_id"]:
                    session.events[i] = replace(event, retained=record["retained"])
                    break

    def create_session(self, owner: str = "anonymous") -> str:
        session_id = uuid.uuid4().hex
        record = {"op": "create", "session_id": session_id, "owner": owner, "created_at": _now()}
        with self._lock:
            self._backend.append(record)
            self._apply(record)
        return session_id

    def session(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise NotFoundError(f"unknown session {session_id!r}")
        return session

    def session_ids(self) -> list[str]:
        return sorted(self._sessions)

    def append_event(
        self, session_id: str, kind: str, payload: dict, retained: bool = True
    ) -> str:
        if kind not in EVENT_KINDS:
            raise NotFoundError(f"unknown event kind {kind!r}")
        event_id = uuid.uuid4().hex
        record = {
            "op": "append",
            "session_id": session_id,
            "event_id": event_id,
            "timestamp": _now(),
            "kind": kind,
            "payload": payload,
            "retained": retained,
        }
        with self._lock:
            self.session(session_id)  # not-found check under the lock
            self._backend.append(record)
            self._apply(record)
        return event_id

    def set_retained(self, session_id: str, event_id: str, retained: bool):
        with self._lock:
            session = self.session(session_id)
            if not any(e.event_id == event_id for e in session.events):
                raise NotFoundError(f"unknown event {event_id!r} in session {session_id!r}")
            record = {
                "op": "retain",
                "session_id": session_id,
                "event_id": event_id,
                "retained": retained,
            }
            self._backend.append(record)
            self._apply(record)

    def events(self, session_id: str) -> list[InteractionEvent]:
        """Full history including discarded events (audit view)."""
        return list(self.session(session_id).events)

    def restore(self, session_id: str, up_to_event_id: str) -> SessionState:
        """State from retained events up to and including the given event.

        Restoration is a view: later events remain stored untouched.
        """
        session = self.session(session_id)
        prefix: list[InteractionEvent] = []
        found = False
        for event in session.events:
            if event.retained:
                prefix.append(event)
            if event.event_id == up_to_event_id:
                found = True
                break
        if not found:
            raise NotFoundError(f"unknown event {up_to_event_id!r} in session {session_id!r}")
        return SessionState(session_id=session_id, events=tuple(prefix))

    def find_outcome(self, session_id: str, outcome_ref: str) -> InteractionEvent:
        for event in self.session(session_id).events:
            if event.kind == "outcome" and event.event_id == outcome_ref:
                return event
        raise NotFoundError(f"unknown outcome {outcome_ref!r} in session {session_id!r}")


# ---------------------------------------------------------------------------
# export / import bundles

def _canonical(doc) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def bundle_digest(bundle: dict) -> str:
    body = {k: v for k, v in bundle.items() if k != "content_digest"}
    return hashlib.sha256(_canonical(body)).hexdigest()


def scan_for_secrets(bundle: dict, secret_values: Iterable[str]):
    serialized = json.dumps(bundle, ensure_ascii=False)
    for secret in secret_values:
        if secret and secret in serialized:
            raise IntegrityError("bundle would contain secret material; export refused")


def export_bundle(
    store: SessionStore,
    session_id: str,
    outcome_ref: str,
    secret_values: Iterable[str] = (),
) -> dict:
    """Self-contained, integrity-checked record of one question outcome."""
    event = store.find_outcome(session_id, outcome_ref)
    outcome = event.payload
    bundle = {
        "bundle_version": BUNDLE_VERSION,
        "use_case_id": outcome.get("use_case_id", ""),
        "schema_fingerprint": outcome.get("schema_fingerprint", ""),
        "question": {
            "text": outcome.get("question_ref", ""),
            "kind": outcome.get("question_kind", "custom"),
        },
        "llm_config_redacted": outcome.get("llm_config", None),
        "prompt_transcript": outcome.get("prompt_transcript", []),
        "query_history": outcome.get("query_history", []),
        "result": outcome.get("result"),
        "dataset": outcome.get("dataset"),
        "chart": outcome.get("chart"),
        "interpretation": outcome.get("interpretation"),
        "status": outcome.get("status", "complete"),
        "created_at": _now(),
    }
    bundle["content_digest"] = bundle_digest(bundle)
    scan_for_secrets(bundle, secret_values)
    return bundle


def import_bundle(
    store: SessionStore,
    bundle: dict,
    registered_use_cases: dict[str, str],
    owner: str = "import",
) -> str:
    """Seed a new session from a bundle; returns the new session id.

    ``registered_use_cases`` maps use_case_id to the currently registered
    schema fingerprint. A fingerprint mismatch warns but does not block.
    """
    if bundle.get("bundle_version") != BUNDLE_VERSION:
        raise BundleVersionError(
            f"unsupported bundle version {bundle.get('bundle_version')!r}"
        )
    if bundle_digest(bundle) != bundle.get("content_digest"):
        raise IntegrityError("bundle content digest does not verify; refusing import")
    use_case_id = bundle.get("use_case_id", "")
    if use_case_id not in registered_use_cases:
        raise NotFoundError(f"bundle references unregistered use case {use_case_id!r}")

    session_id = store.create_session(owner=owner)
    if registered_use_cases[use_case_id] != bundle.get("schema_fingerprint"):
        store.append_event(
            session_id,
            "note",
            {
                "warning": "schema-fingerprint-mismatch",
                "bundle_fingerprint": bundle.get("schema_fingerprint"),
                "registered_fingerprint": registered_use_cases[use_case_id],
            },
        )
    store.append_event(
        session_id,
        "question-submitted",
        {"question": bundle["question"]["text"], "kind": bundle["question"]["kind"],
         "use_case_id": use_case_id, "imported": True},
    )
    outcome_payload = {
        "question_ref": bundle["question"]["text"],
        "question_kind": bundle["question"]["kind"],
        "use_case_id": use_case_id,
        "schema_fingerprint": bundle.get("schema_fingerprint", ""),
        "llm_config": bundle.get("llm_config_redacted"),
        "prompt_transcript": bundle.get("prompt_transcript", []),
        "query_history": bundle.get("query_history", []),
        "result": bundle.get("result"),
        "dataset": bundle.get("dataset"),
        "chart": bundle.get("chart"),
        "interpretation": bundle.get("interpretation"),
        "status": bundle.get("status", "complete"),
        "imported": True,
    }
    store.append_event(session_id, "outcome", outcome_payload)
    return session_id


def normalize_bundle(bundle: dict) -> dict:
    """Zero out timestamps/ids so re-exports can be compared digest-wise."""
    normalized = json.loads(json.dumps(bundle))
    normalized["created_at"] = ""
    normalized.pop("content_digest", None)

    def strip(node):
        if isinstance(node, dict):
            for key in ("timestamp", "started", "finished", "event_id", "outcome_ref",
                        "session_id", "retrieved_at", "imported"):
                node.pop(key, None)
            for value in node.values():
                strip(value)
        elif isinstance(node, list):
            for value in node:
                strip(value)

    strip(normalized)
    return normalized
