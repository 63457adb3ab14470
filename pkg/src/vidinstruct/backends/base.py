"""Abstract service-client protocols for the model backends.

Each protocol abstracts one model role: chat covers every LLM
judge/generator, embed the frame/text encoder, classify_frame the
retinal-imaging classifier head, propose_regions the segmentation model,
score_image_text the image-text similarity model, detect_sensitive the
privacy detector, and transcribe the ASR model.
"""

from __future__ import annotations

from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .types import (
    ChatRequest,
    ChatResponse,
    DetectionResult,
    FrameClassification,
    RegionProposal,
    TranscriptSegment,
)


@runtime_checkable
class ChatBackend(Protocol):
    def chat(self, req: ChatRequest) -> ChatResponse: ...


@runtime_checkable
class EmbeddingBackend(Protocol):
    @property
    def dim(self) -> int: ...

    def embed(self, payload: bytes) -> np.ndarray: ...


@runtime_checkable
class FrameClassifierBackend(Protocol):
    def classify_frame(self, frame: bytes) -> FrameClassification: ...


@runtime_checkable
class RegionProposalBackend(Protocol):
    def propose_regions(self, image: bytes) -> RegionProposal: ...


@runtime_checkable
class ImageTextSimilarityBackend(Protocol):
    def score_image_text(self, region: bytes, prompts: Sequence[str]) -> list[float]: ...


@runtime_checkable
class SensitiveDetectorBackend(Protocol):
    def detect_sensitive(self, image: bytes) -> DetectionResult: ...


@runtime_checkable
class TranscriberBackend(Protocol):
    def transcribe(self, audio: bytes, start_s: float, end_s: float) -> list[TranscriptSegment]: ...


@runtime_checkable
class TokenEmbeddingBackend(Protocol):
    """Per-token embeddings for the semantic-similarity score."""

    @property
    def dim(self) -> int: ...

    def embed_tokens(self, tokens: Sequence[str]) -> np.ndarray: ...
