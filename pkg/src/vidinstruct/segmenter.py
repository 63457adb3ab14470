"""Embedding-stream episode segmentation, keyframe selection, transcript spans.

Videos are cut into visually cohesive episodes wherever the cosine
similarity between consecutive frame embeddings drops below the boundary
threshold. Each retained episode gets a keyframe (the frame the classifier
scores highest for retinal imaging) and a transcript span padded by a
temporal buffer on both sides.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .backends.base import FrameClassifierBackend
from .backends.types import FrameClassification
from .errors import ConfigError


@dataclass
class FrameSample:
    frame_index: int
    timestamp_s: float
    embedding: np.ndarray


@dataclass
class SegmenterConfig:
    delta_c: float = 0.95
    sample_rate_fps: float = 1.0
    delta_t_s: float = 3.0
    min_episode_frames: int = 2
    keyframe_min_prob: float = 0.5

    def validate(self) -> None:
        if not 0.0 < self.delta_c <= 1.0:
            raise ConfigError("delta_c must be in (0, 1]")
        if self.delta_t_s < 0:
            raise ConfigError("delta_t_s must be >= 0")
        if self.sample_rate_fps <= 0:
            raise ConfigError("sample_rate_fps must be positive")
        if self.min_episode_frames < 1:
            raise ConfigError("min_episode_frames must be >= 1")


@dataclass
class TimeSpan:
    start_s: float
    end_s: float


@dataclass
class Episode:
    episode_id: str
    start_index: int
    end_index: int  # inclusive
    keyframe_index: Optional[int] = None
    keyframe_classification: Optional[FrameClassification] = None
    transcript_span: Optional[TimeSpan] = None
    frame_indices: list[int] = field(default_factory=list)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero-norm embedding is degenerate")
    return float(np.dot(a, b) / (na * nb))


def segment_boundaries(embeddings: np.ndarray, delta_c: float) -> list[int]:
    """Indices i such that a boundary falls between frames i and i+1."""
    emb = np.asarray(embeddings, dtype=np.float64)
    if len(emb) < 2:
        return []
    norms = np.linalg.norm(emb, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm embedding is degenerate")
    sims = np.sum(emb[:-1] * emb[1:], axis=1) / (norms[:-1] * norms[1:])
    return [int(i) for i in np.nonzero(sims < delta_c)[0]]


def segment_episodes(frames: Sequence[FrameSample], config: SegmenterConfig) -> list[Episode]:
    config.validate()
    if not frames:
        return []
    emb = np.stack([f.embedding for f in frames])
    cuts = segment_boundaries(emb, config.delta_c)
    starts = [0] + [c + 1 for c in cuts]
    ends = [c for c in cuts] + [len(frames) - 1]
    episodes = []
    for k, (s, e) in enumerate(zip(starts, ends)):
        if e - s + 1 < config.min_episode_frames:
            continue
        episodes.append(
            Episode(
                episode_id=f"ep{k:03d}",
                start_index=frames[s].frame_index,
                end_index=frames[e].frame_index,
                frame_indices=[f.frame_index for f in frames[s : e + 1]],
            )
        )
    return episodes


def select_keyframe(
    episode_frames: Sequence[tuple[FrameSample, bytes]],
    classifier: FrameClassifierBackend,
) -> tuple[FrameSample, FrameClassification]:
    """Argmax of retinal probability, earliest frame on ties."""
    if not episode_frames:
        raise ValueError("episode has no frames")
    best: tuple[FrameSample, FrameClassification] | None = None
    for sample, payload in episode_frames:
        cls = classifier.classify_frame(payload)
        if best is None or cls.retinal_probability > best[1].retinal_probability:
            best = (sample, cls)
    assert best is not None
    return best


def transcript_span(start_ts: float, end_ts: float, config: SegmenterConfig, video_duration_s: float) -> TimeSpan:
    return TimeSpan(
        start_s=max(0.0, start_ts - config.delta_t_s),
        end_s=min(video_duration_s, end_ts + config.delta_t_s),
    )


# Precomputed-embedding file format: 8-byte little-endian header length,
# JSON header {"count": N, "dim": D, "timestamps": [...]}, then N*D
# row-major little-endian float32 values.

def write_embeddings(path: Path, embeddings: np.ndarray, timestamps: Sequence[float]) -> None:
    emb = np.asarray(embeddings, dtype="<f4")
    header = json.dumps(
        {"count": int(emb.shape[0]), "dim": int(emb.shape[1]), "timestamps": [float(t) for t in timestamps]}
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(emb.tobytes(order="C"))


def read_embeddings(path: Path) -> tuple[np.ndarray, list[float]]:
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        data = np.frombuffer(fh.read(), dtype="<f4")
    emb = data.reshape(header["count"], header["dim"]).astype(np.float64)
    return emb, [float(t) for t in header["timestamps"]]
