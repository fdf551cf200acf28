"""Shared exception hierarchy.

Every error carries a machine code so the HTTP layer can map it to a
structured body without string matching.
"""

from __future__ import annotations


class CqdashError(Exception):
    """Base class; ``code`` is a stable machine-readable identifier."""

    code = "internal"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details


class NotFoundError(CqdashError):
    code = "not-found"


class PreconditionError(CqdashError):
    code = "precondition"


class ParseError(CqdashError):
    """Syntax error in a query or document; carries an offset when known."""

    code = "parse"

    def __init__(self, message: str, offset: int | None = None, **details):
        super().__init__(message, **details)
        self.offset = offset


class UnsupportedFormError(CqdashError):
    code = "unsupported-form"


class ValidationError(CqdashError):
    """One or more invariant violations; ``violations`` lists all of them."""

    code = "validation"

    def __init__(self, message: str, violations: list[str] | None = None, **details):
        super().__init__(message, **details)
        self.violations = violations or []


class DecodeError(CqdashError):
    """Malformed result document; ``path`` is a JSON pointer to the fault."""

    code = "decode"

    def __init__(self, message: str, path: str = "", **details):
        super().__init__(message, **details)
        self.path = path


class EndpointUnreachableError(CqdashError):
    code = "endpoint-unreachable"


class EndpointStatusError(CqdashError):
    code = "endpoint-status"

    def __init__(self, message: str, status: int, body_snippet: str = "", **details):
        super().__init__(message, **details)
        self.status = status
        self.body_snippet = body_snippet


class ProviderError(CqdashError):
    code = "provider"

    def __init__(self, message: str, retriable: bool = False, **details):
        super().__init__(message, **details)
        self.retriable = retriable


class ExtractionError(CqdashError):
    code = "extraction"


class RepairExhaustedError(CqdashError):
    code = "repair-exhausted"

    def __init__(self, message: str, diagnostics: list[str] | None = None, **details):
        super().__init__(message, **details)
        self.diagnostics = diagnostics or []


class AggregationError(CqdashError):
    code = "aggregation"


class RefinementError(CqdashError):
    code = "refinement"

    def __init__(self, message: str, diagnostics: list[str] | None = None, **details):
        super().__init__(message, **details)
        self.diagnostics = diagnostics or []


class RateLimitError(CqdashError):
    """Daily per-client quota exhausted; ``retry_after`` is in seconds."""

    code = "rate-limit"

    def __init__(self, message: str, retry_after: int = 0, **details):
        super().__init__(message, **details)
        self.retry_after = retry_after


class IntegrityError(CqdashError):
    code = "integrity"


class BundleVersionError(CqdashError):
    code = "bundle-version"


class StartupError(CqdashError):
    code = "startup"
