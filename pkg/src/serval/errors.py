"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class ServalError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(ServalError):
    """Invalid or inconsistent pipeline configuration."""


class CorpusValidationError(ServalError):
    """Fatal defect in corpus/queries/qrels (duplicate identifiers)."""


class TransportError(ServalError):
    """Endpoint unreachable after exhausting retries."""


class EndpointError(ServalError):
    """Endpoint answered with a non-2xx status."""

    def __init__(self, status: int, body: str, url: str = ""):
        self.status = status
        self.body = body
        self.url = url
        super().__init__(f"HTTP {status} from {url or 'endpoint'}: {body[:200]}")


class EmptyDescriptionError(ServalError):
    """The VLM returned an empty completion; never cached."""


class ProtocolError(ServalError):
    """Endpoint answered 2xx but the payload violates the wire contract."""


class IndexFormatError(ServalError):
    """Persisted index is unreadable: bad magic, version, truncation, checksum."""
