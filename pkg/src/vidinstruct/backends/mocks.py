"""Deterministic mock backends used by every test and by --mock runs.

Two flavours exist:

* pure hash mocks — responses are a pure function of (request digest, seed),
  identical across processes;
* scripted mocks — a fixture table maps request digests or prompt substrings
  to canned responses, enabling hand-authored end-to-end traces with zero
  model weights.
"""

from __future__ import annotations

import hashlib
from typing import Optional, Sequence

import numpy as np

from ..errors import MalformedResponseError
from .types import (
    Box,
    ChatRequest,
    ChatResponse,
    Detection,
    DetectionResult,
    FrameClassification,
    RegionProposal,
    TranscriptSegment,
    payload_digest,
)


def _digest_to_seed(*parts: str) -> int:
    h = hashlib.sha256("|".join(parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big")


class ScriptedChatBackend:
    """Chat mock backed by a fixture table.

    Lookup order: exact request digest, then the first rule whose ``match``
    substrings all occur in the rendered prompt text, then ``default``.
    Responses are pure functions of the request, so retried identical
    requests yield identical output.
    """

    def __init__(
        self,
        rules: Optional[list[dict]] = None,
        digest_table: Optional[dict[str, str]] = None,
        default: Optional[str] = None,
    ):
        self.rules = rules or []
        self.digest_table = digest_table or {}
        self.default = default
        self.calls: list[str] = []

    def chat(self, req: ChatRequest) -> ChatResponse:
        req.validate()
        text = req.text()
        self.calls.append(req.digest())
        hit = self.digest_table.get(req.digest())
        if hit is None:
            for rule in self.rules:
                if all(sub in text for sub in rule["match"]):
                    hit = rule["response"]
                    break
        if hit is None:
            hit = self.default
        if hit is None:
            raise KeyError(f"no scripted response for request digest {req.digest()[:12]}")
        return ChatResponse(content=hit)


class HashEmbeddingBackend:
    """Unit vectors drawn deterministically from the payload digest."""

    def __init__(self, dim: int = 16, seed: int = 0):
        self._dim = dim
        self.seed = seed
        self.calls: list[str] = []

    @property
    def dim(self) -> int:
        return self._dim

    def embed(self, payload: bytes) -> np.ndarray:
        self.calls.append(payload_digest(payload))
        rng = np.random.default_rng(_digest_to_seed(payload_digest(payload), str(self.seed)))
        v = rng.standard_normal(self._dim)
        return v / np.linalg.norm(v)


class TableFrameClassifier:
    """Classifier mock keyed by frame payload digest."""

    def __init__(self, table: Optional[dict[str, dict]] = None):
        self.table = table or {}
        self.calls: list[str] = []

    def classify_frame(self, frame: bytes) -> FrameClassification:
        digest = payload_digest(frame)
        self.calls.append(digest)
        row = self.table.get(digest)
        if row is None:
            prob = (_digest_to_seed(digest, "prob") % 1000) / 999.0
            modality = ("CFP", "OCT", "UWF")[_digest_to_seed(digest, "mod") % 3]
            row = {"retinal_probability": prob, "modality": modality, "modality_confidence": 0.9}
        out = FrameClassification(
            retinal_probability=float(row["retinal_probability"]),
            modality=str(row["modality"]),
            modality_confidence=float(row["modality_confidence"]),
        )
        out.validate()
        return out


class TableRegionProposer:
    """Region-proposal mock; defaults to zero proposals (whole-frame fallback)."""

    def __init__(self, table: Optional[dict[str, list[dict]]] = None):
        self.table = table or {}
        self.calls: list[str] = []

    def propose_regions(self, image: bytes) -> RegionProposal:
        digest = payload_digest(image)
        self.calls.append(digest)
        rows = self.table.get(digest, [])
        return RegionProposal(boxes=[Box(r["x"], r["y"], r["w"], r["h"]) for r in rows])


class TableSimilarityScorer:
    """Image-text similarity mock keyed by region payload digest.

    Table rows map prompt text (or ``"default"``) to a score; unknown
    regions fall back to a hash-derived score in [-1, 1].
    """

    def __init__(self, table: Optional[dict[str, dict[str, float]]] = None):
        self.table = table or {}
        self.calls: list[tuple[str, int]] = []

    def score_image_text(self, region: bytes, prompts: Sequence[str]) -> list[float]:
        digest = payload_digest(region)
        self.calls.append((digest, len(prompts)))
        row = self.table.get(digest, {})
        scores = []
        for prompt in prompts:
            if prompt in row:
                scores.append(float(row[prompt]))
            elif "default" in row:
                scores.append(float(row["default"]))
            else:
                scores.append((_digest_to_seed(digest, prompt) % 2001 - 1000) / 1000.0)
        return scores


class TableSensitiveDetector:
    """Privacy-detector mock; defaults to zero detections."""

    def __init__(self, table: Optional[dict[str, list[dict]]] = None):
        self.table = table or {}
        self.calls: list[str] = []

    def detect_sensitive(self, image: bytes) -> DetectionResult:
        digest = payload_digest(image)
        self.calls.append(digest)
        rows = self.table.get(digest, [])
        return DetectionResult(
            detections=[
                Detection(box=Box(r["x"], r["y"], r["w"], r["h"]), confidence=float(r.get("confidence", 1.0)))
                for r in rows
            ]
        )


class TableTranscriber:
    """ASR mock keyed by audio payload digest."""

    def __init__(self, table: Optional[dict[str, list[dict]]] = None):
        self.table = table or {}
        self.calls: list[str] = []

    def transcribe(self, audio: bytes, start_s: float, end_s: float) -> list[TranscriptSegment]:
        digest = payload_digest(audio)
        self.calls.append(digest)
        rows = self.table.get(digest, [])
        return [
            TranscriptSegment(start_s=float(r["start_s"]), end_s=float(r["end_s"]), text=str(r["text"]))
            for r in rows
            if r["end_s"] >= start_s and r["start_s"] <= end_s
        ]


class HashedOneHotTokenEmbedder:
    """Token embeddings as one-hot vectors at a stable hash bucket.

    Identical tokens always map to identical vectors; distinct tokens are
    orthogonal unless their hash buckets collide (use ``bucket`` to pick
    collision-free test vocabularies).
    """

    def __init__(self, dim: int = 4096):
        self._dim = dim
        self.calls: list[int] = []

    @property
    def dim(self) -> int:
        return self._dim

    def bucket(self, token: str) -> int:
        return _digest_to_seed(token, "token") % self._dim

    def embed_tokens(self, tokens: Sequence[str]) -> np.ndarray:
        self.calls.append(len(tokens))
        out = np.zeros((len(tokens), self._dim))
        for i, tok in enumerate(tokens):
            out[i, self.bucket(tok)] = 1.0
        return out


def validate_chat_payload(content: str) -> str:
    """Shared guard: responses must be non-empty text."""
    if not isinstance(content, str) or not content.strip():
        raise MalformedResponseError("empty chat response")
    return content
