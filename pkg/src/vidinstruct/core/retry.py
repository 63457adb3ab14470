"""Retry policy for structured LLM calls.

Deterministic backends can emit the same malformed output forever, so the
last retry perturbs the temperature: attempt 1 is the original request,
attempt 2 identical, attempt 3 re-issued at the retry temperature. After
that the owning item is quarantined.
"""

from __future__ import annotations

from typing import Callable, Optional, TypeVar

from ..backends.base import ChatBackend
from ..backends.types import ChatRequest
from ..errors import MalformedResponseError, QuarantineError, TransportError

T = TypeVar("T")


def call_structured(
    backend: ChatBackend,
    build_request: Callable[[Optional[float]], ChatRequest],
    parse: Callable[[str], T],
    max_retries: int = 2,
    retry_temperature: float = 0.2,
    reason_prefix: str = "llm",
) -> T:
    """Call chat and parse, retrying per policy; quarantine on exhaustion.

    ``build_request`` receives an override temperature (None means the
    stage default).
    """
    last_error: Exception | None = None
    for attempt in range(max_retries + 1):
        override = retry_temperature if attempt >= 2 else None
        req = build_request(override)
        try:
            resp = backend.chat(req)
            return parse(resp.content)
        except (MalformedResponseError, TransportError) as exc:
            last_error = exc
    if isinstance(last_error, TransportError):
        # infrastructure failure, not a content failure: abort, don't park
        raise last_error
    raise QuarantineError(f"{reason_prefix}: exhausted retries ({last_error})")
