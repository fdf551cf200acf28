"""Provider-agnostic chat completion.

Four remote adapters (OpenAI-, Groq-, Mistral-, and Google-generative-
compatible) share one request/response contract, plus a scripted mock for
deterministic tests. API keys are resolved from opaque references at call
time only and never stored on configs or serialized anywhere.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Protocol

import httpx

from ..errors import PreconditionError, ProviderError

DEFAULT_PROVIDER = "openai"
DEFAULT_MODEL = "gpt-4o-mini"


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise PreconditionError(f"invalid message role {self.role!r}")


@dataclass(frozen=True)
class LlmConfig:
    provider_id: str = DEFAULT_PROVIDER
    model_id: str = DEFAULT_MODEL
    temperature: float = 0.0
    max_output_tokens: int = 2048
    api_key_ref: Optional[str] = None  # e.g. "env:OPENAI_API_KEY"; never serialized

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise PreconditionError("temperature must be in [0, 2]")


@dataclass(frozen=True)
class LlmRequest:
    config: LlmConfig
    messages: tuple[ChatMessage, ...]

    def __post_init__(self):
        if not self.messages:
            raise PreconditionError("request must contain at least one message")
        if self.messages[0].role != "system":
            raise PreconditionError("first message must have role 'system'")


@dataclass(frozen=True)
class LlmResponse:
    content: str
    input_tokens: int = 0
    output_tokens: int = 0
    provider_latency: float = 0.0
    truncated: bool = False


def resolve_secret(ref: Optional[str], secrets: Optional[dict] = None) -> Optional[str]:
    """Resolve an opaque key reference: ``env:NAME`` or ``secret:NAME``."""
    if ref is None:
        return None
    scheme, _, name = ref.partition(":")
    if scheme == "env":
        value = os.environ.get(name)
    elif scheme == "secret":
        value = (secrets or {}).get(name)
    else:
        raise PreconditionError(f"unknown secret reference scheme {scheme!r}")
    if not value:
        raise ProviderError(f"API key reference {ref!r} did not resolve", retriable=False)
    return value


class Provider(Protocol):
    def complete(self, req: LlmRequest, api_key: Optional[str]) -> LlmResponse: ...


def _raise_for_status(response: httpx.Response, provider: str):
    status = response.status_code
    if status in (401, 403):
        raise ProviderError(f"{provider}: authentication failed ({status})", retriable=False)
    if status == 429 or status >= 500:
        raise ProviderError(f"{provider}: transient failure ({status})", retriable=True)
    if status >= 400:
        raise ProviderError(
            f"{provider}: request rejected ({status}): {response.text[:300]}", retriable=False
        )


class OpenAiCompatProvider:
    """OpenAI-style /chat/completions; also used by Groq and Mistral."""

    def __init__(self, name: str, base_url: str, timeout: float = 60.0):
        self.name = name
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def complete(self, req: LlmRequest, api_key: Optional[str]) -> LlmResponse:
        if not api_key:
            raise ProviderError(f"{self.name}: no API key configured", retriable=False)
        payload = {
            "model": req.config.model_id,
            "temperature": req.config.temperature,
            "max_tokens": req.config.max_output_tokens,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
        }
        started = time.monotonic()
        try:
            response = httpx.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise ProviderError(f"{self.name}: transport failure: {exc}", retriable=True) from exc
        _raise_for_status(response, self.name)
        body = response.json()
        choice = body["choices"][0]
        usage = body.get("usage", {})
        return LlmResponse(
            content=choice["message"]["content"] or "",
            input_tokens=usage.get("prompt_tokens", 0),
            output_tokens=usage.get("completion_tokens", 0),
            provider_latency=time.monotonic() - started,
            truncated=choice.get("finish_reason") == "length",
        )


class GoogleGenerativeProvider:
    """Google generative-language API (generateContent shape)."""

    def __init__(self, base_url: str = "https://generativelanguage.googleapis.com/v1beta", timeout: float = 60.0):
        self.name = "google"
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def complete(self, req: LlmRequest, api_key: Optional[str]) -> LlmResponse:
        if not api_key:
            raise ProviderError("google: no API key configured", retriable=False)
        system = req.messages[0].content
        contents = [
            {"role": "model" if m.role == "assistant" else "user", "parts": [{"text": m.content}]}
            for m in req.messages[1:]
        ]
        payload = {
            "systemInstruction": {"parts": [{"text": system}]},
            "contents": contents,
            "generationConfig": {
                "temperature": req.config.temperature,
                "maxOutputTokens": req.config.max_output_tokens,
            },
        }
        started = time.monotonic()
        try:
            response = httpx.post(
                f"{self.base_url}/models/{req.config.model_id}:generateContent",
                json=payload,
                params={"key": api_key},
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise ProviderError(f"google: transport failure: {exc}", retriable=True) from exc
        _raise_for_status(response, self.name)
        body = response.json()
        candidate = body["candidates"][0]
        text = "".join(part.get("text", "") for part in candidate.get("content", {}).get("parts", []))
        usage = body.get("usageMetadata", {})
        return LlmResponse(
            content=text,
            input_tokens=usage.get("promptTokenCount", 0),
            output_tokens=usage.get("candidatesTokenCount", 0),
            provider_latency=time.monotonic() - started,
            truncated=candidate.get("finishReason") == "MAX_TOKENS",
        )


def prompt_digest(messages: tuple[ChatMessage, ...]) -> str:
    joined = "\x1e".join(f"{m.role}\x1f{m.content}" for m in messages)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


@dataclass
class MockCall:
    messages: tuple[ChatMessage, ...]
    response: str


class MockProvider:
    """Scripted provider: responses by prompt digest or by call ordinal.

    ``transcript`` is ``{"responses": [...], "by_digest": {digest: text}}``;
    digest lookups win over ordinals. The call log supports auditing that
    no hidden LLM calls happen.
    """

    def __init__(self, transcript: Optional[dict] = None):
        transcript = transcript or {}
        self.responses: list[str] = list(transcript.get("responses", []))
        self.by_digest: dict[str, str] = dict(transcript.get("by_digest", {}))
        self.calls: list[MockCall] = []
        self._lock = threading.Lock()
        self._cursor = 0

    @classmethod
    def from_file(cls, path) -> "MockProvider":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def reset(self):
        with self._lock:
            self._cursor = 0
            self.calls = []

    def complete(self, req: LlmRequest, api_key: Optional[str]) -> LlmResponse:
        with self._lock:
            digest = prompt_digest(req.messages)
            if digest in self.by_digest:
                content = self.by_digest[digest]
            elif self._cursor < len(self.responses):
                content = self.responses[self._cursor]
                self._cursor += 1
            else:
                raise ProviderError("mock transcript exhausted", retriable=False)
            self.calls.append(MockCall(messages=req.messages, response=content))
        prompt_chars = sum(len(m.content) for m in req.messages)
        return LlmResponse(
            content=content,
            input_tokens=prompt_chars // 4,
            output_tokens=len(content) // 4,
            provider_latency=0.0,
        )


class ProviderRegistry:
    def __init__(self):
        self._providers: dict[str, Provider] = {}
        self._secrets: dict[str, str] = {}

    def register(self, provider_id: str, provider: Provider):
        self._providers[provider_id] = provider

    def set_secrets(self, secrets: dict[str, str]):
        self._secrets = dict(secrets)

    def get(self, provider_id: str) -> Provider:
        provider = self._providers.get(provider_id)
        if provider is None:
            raise PreconditionError(f"provider {provider_id!r} is not registered")
        return provider

    def __contains__(self, provider_id: str) -> bool:
        return provider_id in self._providers

    def ids(self) -> list[str]:
        return sorted(self._providers)

    def complete(self, req: LlmRequest) -> LlmResponse:
        provider = self.get(req.config.provider_id)
        api_key = None
        if not isinstance(provider, MockProvider):
            api_key = resolve_secret(req.config.api_key_ref, self._secrets)
        return provider.complete(req, api_key)


def build_default_registry(mock_transcript: Optional[dict] = None) -> ProviderRegistry:
    registry = ProviderRegistry()
    registry.register("openai", OpenAiCompatProvider("openai", "https://api.openai.com/v1"))
    registry.register("groq", OpenAiCompatProvider("groq", "https://api.groq.com/openai/v1"))
    registry.register("mistral", OpenAiCompatProvider("mistral", "https://api.mistral.ai/v1"))
    registry.register("google", GoogleGenerativeProvider())
    registry.register("mock", MockProvider(mock_transcript))
    return registry


def complete(req: LlmRequest, registry: ProviderRegistry) -> LlmResponse:
    """Module-level convenience wrapper around the registry."""
    return registry.complete(req)
