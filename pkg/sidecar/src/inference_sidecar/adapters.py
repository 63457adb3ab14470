"""Model adapters behind the sidecar endpoints.

Every adapter is independently loadable: the app serves whatever subset is
registered and reports the active set via /healthz. The stub adapters are
pure functions of the payload digest, so integration tests get stable
outputs without any model weights. Real deployments replace individual
stubs with weight-backed implementations that honor the same interface.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

MODALITIES = ("CFP", "OCT", "UWF")


def _seed(payload: bytes, salt: str) -> int:
    digest = hashlib.sha256(payload + salt.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class EmbedAdapter(Protocol):
    dim: int

    def embed(self, payload: bytes, kind: str) -> list[float]: ...


class ClassifyAdapter(Protocol):
    def classify(self, image: bytes) -> dict: ...


class TranscribeAdapter(Protocol):
    def transcribe(self, audio: bytes, start_s: float, end_s: float) -> list[dict]: ...


class RegionsAdapter(Protocol):
    def propose(self, image: bytes) -> list[dict]: ...


class ClipScoreAdapter(Protocol):
    def score(self, image: bytes, prompts: Sequence[str]) -> list[float]: ...


class DetectAdapter(Protocol):
    def detect(self, image: bytes) -> list[dict]: ...


class StubEmbedAdapter:
    """Deterministic unit vectors derived from the payload digest."""

    def __init__(self, dim: int = 16):
        self.dim = dim

    def embed(self, payload: bytes, kind: str) -> list[float]:
        rng = np.random.default_rng(_seed(payload, f"embed:{kind}"))
        v = rng.standard_normal(self.dim)
        v = v / np.linalg.norm(v)
        return [float(x) for x in v]


class StubClassifyAdapter:
    def classify(self, image: bytes) -> dict:
        prob = (_seed(image, "prob") % 1000) / 999.0
        modality = MODALITIES[_seed(image, "modality") % len(MODALITIES)]
        confidence = 0.5 + (_seed(image, "confidence") % 500) / 999.0
        return {
            "retinal_probability": prob,
            "modality": modality,
            "modality_confidence": confidence,
        }


class StubTranscribeAdapter:
    """Emits one synthetic segment per requested window."""

    def transcribe(self, audio: bytes, start_s: float, end_s: float) -> list[dict]:
        if end_s <= start_s:
            return []
        token = hashlib.sha256(audio).hexdigest()[:8]
        return [{"start_s": start_s, "end_s": end_s, "text": f"segment {token}"}]


class StubRegionsAdapter:
    """Proposes a centered candidate region for sufficiently large images."""

    def propose(self, image: bytes) -> list[dict]:
        size = 8 + _seed(image, "region") % 8
        return [{"x": 4, "y": 4, "w": size, "h": size}]


class StubClipScoreAdapter:
    def score(self, image: bytes, prompts: Sequence[str]) -> list[float]:
        return [(_seed(image, f"clip:{p}") % 2001 - 1000) / 1000.0 for p in prompts]


class StubDetectAdapter:
    """Conservative default: detects nothing."""

    def detect(self, image: bytes) -> list[dict]:
        return []


@dataclass
class AdapterRegistry:
    embed: EmbedAdapter | None = None
    classify_frame: ClassifyAdapter | None = None
    transcribe: TranscribeAdapter | None = None
    regions: RegionsAdapter | None = None
    clip_score: ClipScoreAdapter | None = None
    detect: DetectAdapter | None = None
    _names: tuple = field(
        default=("embed", "classify_frame", "transcribe", "regions", "clip_score", "detect"),
        repr=False,
    )

    def active(self) -> list[str]:
        return [name for name in self._names if getattr(self, name) is not None]

    @classmethod
    def stubs(cls, dim: int = 16) -> "AdapterRegistry":
        return cls(
            embed=StubEmbedAdapter(dim=dim),
            classify_frame=StubClassifyAdapter(),
            transcribe=StubTranscribeAdapter(),
            regions=StubRegionsAdapter(),
            clip_score=StubClipScoreAdapter(),
            detect=StubDetectAdapter(),
        )
