from .providers import (
    ChatMessage,
    LlmConfig,
    LlmRequest,
    LlmResponse,
    MockProvider,
    ProviderRegistry,
    build_default_registry,
    complete,
    DEFAULT_MODEL,
    DEFAULT_PROVIDER,
)
from .generation import (
    CandidateQuery,
    Interpretation,
    NeuralLayer,
    extract_fenced_query,
    MAX_REPAIR_ATTEMPTS,
)

__all__ = [
    "ChatMessage",
    "LlmConfig",
    "LlmRequest",
    "LlmResponse",
    "MockProvider",
    "ProviderRegistry",
    "build_default_registry",
    "complete",
    "DEFAULT_MODEL",
    "DEFAULT_PROVIDER",
    "CandidateQuery",
    "Interpretation",
    "NeuralLayer",
    "extract_fenced_query",
    "MAX_REPAIR_ATTEMPTS",
]
