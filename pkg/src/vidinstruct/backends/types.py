"""Request/response types for every model the pipeline consumes.

Real deployments speak HTTP+JSON against these same shapes (see
``vidinstruct.backends.http`` and the ``schemas/`` fixture directory shared
with the inference sidecar); tests use the deterministic mocks in
``vidinstruct.backends.mocks``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

from ..errors import MalformedResponseError

VALID_MODALITIES = ("CFP", "OCT", "UWF")


@dataclass
class ChatMessage:
    role: str  # "user" | "assistant"
    content: str


@dataclass
class ChatRequest:
    system: str
    messages: list[ChatMessage]
    temperature: float = 0.0
    max_tokens: int = 2048
    seed: Optional[int] = None

    def validate(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        expected = "user"
        for msg in self.messages:
            if msg.role != expected:
                raise ValueError("roles must alternate starting at user")
            expected = "assistant" if expected == "user" else "user"

    def digest(self) -> str:
        payload = {
            "system": self.system,
            "messages": [[m.role, m.content] for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "seed": self.seed,
        }
        raw = json.dumps(payload, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def text(self) -> str:
        """Full rendered text, used by scripted mocks for rule matching."""
        return self.system + "\n" + "\n".join(m.content for m in self.messages)


@dataclass
class ChatResponse:
    content: str
    finish_reason: str = "stop"


@dataclass
class FrameClassification:
    retinal_probability: float
    modality: str
    modality_confidence: float

    def validate(self) -> None:
        if not 0.0 <= self.retinal_probability <= 1.0:
            raise MalformedResponseError("retinal_probability outside [0, 1]")
        if not 0.0 <= self.modality_confidence <= 1.0:
            raise MalformedResponseError("modality_confidence outside [0, 1]")
        if self.modality not in VALID_MODALITIES:
            raise MalformedResponseError(f"unknown modality {self.modality!r}")


@dataclass
class Box:
    x: int
    y: int
    w: int
    h: int

    def validate(self, width: int | None = None, height: int | None = None) -> None:
        if self.w <= 0 or self.h <= 0:
            raise MalformedResponseError("box width/height must be positive")
        if width is not None and (self.x < 0 or self.x + self.w > width):
            raise MalformedResponseError("box outside image bounds (x)")
        if height is not None and (self.y < 0 or self.y + self.h > height):
            raise MalformedResponseError("box outside image bounds (y)")


@dataclass
class RegionProposal:
    boxes: list[Box] = field(default_factory=list)


@dataclass
class Detection:
    box: Box
    confidence: float


@dataclass
class DetectionResult:
    detections: list[Detection] = field(default_factory=list)


@dataclass
class TranscriptSegment:
    start_s: float
    end_s: float
    text: str


def payload_digest(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()
