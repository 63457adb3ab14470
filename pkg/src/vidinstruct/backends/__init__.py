from .base import (
    ChatBackend,
    EmbeddingBackend,
    FrameClassifierBackend,
    ImageTextSimilarityBackend,
    RegionProposalBackend,
    SensitiveDetectorBackend,
    TokenEmbeddingBackend,
    TranscriberBackend,
)
from .types import (
    Box,
    ChatMessage,
    ChatRequest,
    ChatResponse,
    Detection,
    DetectionResult,
    FrameClassification,
    RegionProposal,
    TranscriptSegment,
    payload_digest,
)

__all__ = [
    "Box",
    "ChatBackend",
    "ChatMessage",
    "ChatRequest",
    "ChatResponse",
    "Detection",
    "DetectionResult",
    "EmbeddingBackend",
    "FrameClassification",
    "FrameClassifierBackend",
    "ImageTextSimilarityBackend",
    "RegionProposal",
    "RegionProposalBackend",
    "SensitiveDetectorBackend",
    "TokenEmbeddingBackend",
    "TranscriberBackend",
    "TranscriptSegment",
    "payload_digest",
]
