"""HTTP+JSON clients for real model deployments.

Wire formats mirror the schema fixtures in ``schemas/endpoint_fixtures.json``
which the inference sidecar implements verbatim. The chat client follows
the widely used chat-completions convention so any compatible endpoint can
be plugged in.
"""

from __future__ import annotations

import base64
from typing import Sequence

import httpx
import numpy as np

from ..errors import MalformedResponseError, TransportError
from .types import (
    Box,
    ChatRequest,
    ChatResponse,
    Detection,
    DetectionResult,
    FrameClassification,
    RegionProposal,
    TranscriptSegment,
)


def _post(url: str, payload: dict, token: str | None = None, timeout: float = 60.0) -> dict:
    headers = {"Authorization": f"Bearer {token}"} if token else {}
    try:
        resp = httpx.post(url, json=payload, headers=headers, timeout=timeout)
    except httpx.HTTPError as exc:
        raise TransportError(f"POST {url} failed: {exc}") from exc
    if resp.status_code >= 500:
        raise TransportError(f"POST {url} returned {resp.status_code}")
    if resp.status_code >= 400:
        raise MalformedResponseError(f"POST {url} rejected request: {resp.text[:200]}")
    try:
        return resp.json()
    except ValueError as exc:
        raise MalformedResponseError(f"non-JSON response from {url}") from exc


class HttpChatBackend:
    def __init__(self, base_url: str, token: str | None = None):
        self.base_url = base_url.rstrip("/")
        self.token = token

    def chat(self, req: ChatRequest) -> ChatResponse:
        req.validate()
        messages = [{"role": "system", "content": req.system}]
        messages += [{"role": m.role, "content": m.content} for m in req.messages]
        body = {
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.seed is not None:
            body["seed"] = req.seed
        data = _post(f"{self.base_url}/v1/chat/completions", body, self.token)
        try:
            choice = data["choices"][0]
            return ChatResponse(
                content=choice["message"]["content"],
                finish_reason=choice.get("finish_reason", "stop"),
            )
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError("chat response missing choices/message") from exc


class HttpInferenceBackend:
    """Client for the inference sidecar's seven endpoints."""

    def __init__(self, base_url: str, token: str | None = None):
        self.base_url = base_url.rstrip("/")
        self.token = token

    @property
    def dim(self) -> int:
        info = self.healthz()
        return int(info["embedding_dim"])

    def healthz(self) -> dict:
        try:
            resp = httpx.get(f"{self.base_url}/healthz", timeout=10.0)
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        return resp.json()

    def embed(self, payload: bytes) -> np.ndarray:
        data = _post(
            f"{self.base_url}/embed",
            {"payload_b64": base64.b64encode(payload).decode("ascii"), "kind": "image"},
            self.token,
        )
        vec = np.asarray(data["vector"], dtype=np.float64)
        if abs(float(np.linalg.norm(vec)) - 1.0) > 1e-6:
            raise MalformedResponseError("embedding is not unit-norm")
        return vec

    def classify_frame(self, frame: bytes) -> FrameClassification:
        data = _post(
            f"{self.base_url}/classify_frame",
            {"image_b64": base64.b64encode(frame).decode("ascii")},
            self.token,
        )
        out = FrameClassification(
            retinal_probability=float(data["retinal_probability"]),
            modality=str(data["modality"]),
            modality_confidence=float(data["modality_confidence"]),
        )
        out.validate()
        return out

    def propose_regions(self, image: bytes) -> RegionProposal:
        data = _post(
            f"{self.base_url}/regions",
            {"image_b64": base64.b64encode(image).decode("ascii")},
            self.token,
        )
        return RegionProposal(boxes=[Box(b["x"], b["y"], b["w"], b["h"]) for b in data["boxes"]])

    def score_image_text(self, region: bytes, prompts: Sequence[str]) -> list[float]:
        data = _post(
            f"{self.base_url}/clip_score",
            {"image_b64": base64.b64encode(region).decode("ascii"), "prompts": list(prompts)},
            self.token,
        )
        scores = [float(s) for s in data["scores"]]
        if len(scores) != len(prompts):
            raise MalformedResponseError("clip_score arity mismatch")
        return scores

    def detect_sensitive(self, image: bytes) -> DetectionResult:
        data = _post(
            f"{self.base_url}/detect",
            {"image_b64": base64.b64encode(image).decode("ascii")},
            self.token,
        )
        return DetectionResult(
            detections=[
                Detection(box=Box(b["x"], b["y"], b["w"], b["h"]), confidence=float(b["confidence"]))
                for b in data["boxes"]
            ]
        )

    def transcribe(self, audio: bytes, start_s: float, end_s: float) -> list[TranscriptSegment]:
        data = _post(
            f"{self.base_url}/transcribe",
            {
                "audio_b64": base64.b64encode(audio).decode("ascii"),
                "start_s": start_s,
                "end_s": end_s,
            },
            self.token,
        )
        return [
            TranscriptSegment(start_s=float(s["start_s"]), end_s=float(s["end_s"]), text=str(s["text"]))
            for s in data["segments"]
        ]
