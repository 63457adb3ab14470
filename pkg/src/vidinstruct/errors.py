"""Exception hierarchy shared across pipeline stages."""


class VidinstructError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(VidinstructError):
    """Invalid or inconsistent configuration."""


class MalformedResponseError(VidinstructError):
    """A backend response failed schema or invariant validation.

    Feeds the retry policy; after the configured retries the owning item
    is quarantined.
    """


class TransportError(VidinstructError):
    """A backend could not be reached. Retryable."""


class QuarantineError(VidinstructError):
    """Unrecoverable per-item failure; the item is parked, not discarded."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class ResumeRefusedError(VidinstructError):
    """Checkpoint config digest does not match the supplied config."""
