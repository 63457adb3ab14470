"""FastAPI application factory for the inference sidecar."""

from __future__ import annotations

import base64
import binascii
import os
from typing import Optional

import numpy as np
from fastapi import Depends, FastAPI, HTTPException, Request
from pydantic import BaseModel, Field

from .adapters import MODALITIES, AdapterRegistry


class EmbedRequest(BaseModel):
    payload_b64: str
    kind: str = Field(default="image", pattern="^(image|text|audio)$")


class EmbedResponse(BaseModel):
    vector: list[float]
    dim: int


class ImageRequest(BaseModel):
    image_b64: str


class ClassifyResponse(BaseModel):
    retinal_probability: float = Field(ge=0.0, le=1.0)
    modality: str
    modality_confidence: float = Field(ge=0.0, le=1.0)


class TranscribeRequest(BaseModel):
    audio_b64: str
    start_s: float = Field(ge=0.0)
    end_s: float = Field(ge=0.0)


class Segment(BaseModel):
    start_s: float
    end_s: float
    text: str


class TranscribeResponse(BaseModel):
    segments: list[Segment]


class RegionBox(BaseModel):
    x: int = Field(ge=0)
    y: int = Field(ge=0)
    w: int = Field(ge=1)
    h: int = Field(ge=1)


class RegionsResponse(BaseModel):
    boxes: list[RegionBox]


class ClipScoreRequest(BaseModel):
    image_b64: str
    prompts: list[str] = Field(min_length=1)


class ClipScoreResponse(BaseModel):
    scores: list[float]


class DetectionBox(RegionBox):
    confidence: float = Field(ge=0.0, le=1.0)


class DetectResponse(BaseModel):
    boxes: list[DetectionBox]


class HealthzResponse(BaseModel):
    status: str
    embedding_dim: int
    adapters: list[str]


def _decode(b64: str, label: str) -> bytes:
    try:
        return base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError):
        raise HTTPException(status_code=400, detail=f"{label} is not valid base64")


def create_app(
    adapters: Optional[AdapterRegistry] = None,
    token: Optional[str] = None,
) -> FastAPI:
    """Build the service around the given adapter registry.

    Endpoints whose adapter is missing return 503, so partial deployments
    (for example, embedding-only) stay honest about their capabilities.
    When ``token`` is set (or SIDECAR_TOKEN in the environment), every
    endpoint except /healthz requires ``Authorization: Bearer <token>``.
    """
    registry = adapters if adapters is not None else AdapterRegistry.stubs()
    token = token if token is not None else os.environ.get("SIDECAR_TOKEN")
    app = FastAPI(title="inference-sidecar", version="0.1.0")

    def require_auth(request: Request) -> None:
        if not token:
            return
        header = request.headers.get("Authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    def adapter(name: str):
        impl = getattr(registry, name)
        if impl is None:
            raise HTTPException(status_code=503, detail=f"adapter {name!r} is not loaded")
        return impl

    @app.get("/healthz", response_model=HealthzResponse)
    def healthz() -> HealthzResponse:
        dim = registry.embed.dim if registry.embed is not None else 0
        return HealthzResponse(status="ok", embedding_dim=dim, adapters=registry.active())

    @app.post("/embed", response_model=EmbedResponse, dependencies=[Depends(require_auth)])
    def embed(req: EmbedRequest) -> EmbedResponse:
        impl = adapter("embed")
        payload = _decode(req.payload_b64, "payload_b64")
        vector = np.asarray(impl.embed(payload, req.kind), dtype=np.float64)
        norm = float(np.linalg.norm(vector))
        if norm == 0.0:
            raise HTTPException(status_code=500, detail="adapter produced a zero vector")
        vector = vector / norm  # normalize server-side so clients can rely on it
        return EmbedResponse(vector=[float(x) for x in vector], dim=int(vector.shape[0]))

    @app.post("/classify_frame", response_model=ClassifyResponse, dependencies=[Depends(require_auth)])
    def classify_frame(req: ImageRequest) -> ClassifyResponse:
        impl = adapter("classify_frame")
        row = impl.classify(_decode(req.image_b64, "image_b64"))
        if row["modality"] not in MODALITIES:
            raise HTTPException(status_code=500, detail=f"adapter produced modality {row['modality']!r}")
        return ClassifyResponse(**row)

    @app.post("/transcribe", response_model=TranscribeResponse, dependencies=[Depends(require_auth)])
    def transcribe(req: TranscribeRequest) -> TranscribeResponse:
        impl = adapter("transcribe")
        audio = _decode(req.audio_b64, "audio_b64")
        segments = impl.transcribe(audio, req.start_s, req.end_s)
        return TranscribeResponse(segments=[Segment(**s) for s in segments])

    @app.post("/regions", response_model=RegionsResponse, dependencies=[Depends(require_auth)])
    def regions(req: ImageRequest) -> RegionsResponse:
        impl = adapter("regions")
        boxes = impl.propose(_decode(req.image_b64, "image_b64"))
        return RegionsResponse(boxes=[RegionBox(**b) for b in boxes])

    @app.post("/clip_score", response_model=ClipScoreResponse, dependencies=[Depends(require_auth)])
    def clip_score(req: ClipScoreRequest) -> ClipScoreResponse:
        impl = adapter("clip_score")
        scores = impl.score(_decode(req.image_b64, "image_b64"), req.prompts)
        if len(scores) != len(req.prompts):
            raise HTTPException(status_code=500, detail="adapter returned wrong score arity")
        return ClipScoreResponse(scores=[max(-1.0, min(1.0, float(s))) for s in scores])

    @app.post("/detect", response_model=DetectResponse, dependencies=[Depends(require_auth)])
    def detect(req: ImageRequest) -> DetectResponse:
        impl = adapter("detect")
        boxes = impl.detect(_decode(req.image_b64, "image_b64"))
        return DetectResponse(boxes=[DetectionBox(**b) for b in boxes])

    return app
