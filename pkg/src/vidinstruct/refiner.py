"""Keyframe refinement: region filtering, composition, de-identification.

Candidate sub-regions come from the proposal backend (whole frame when it
finds none); each region is kept only if its best positive-prompt score
clears tau_pos while every negative-prompt score stays below tau_neg. Kept
regions are composed onto a mask-value canvas preserving their relative
offsets, and detected sensitive areas are masked afterwards so privacy
masks can never be cropped away.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .backends.base import ImageTextSimilarityBackend, RegionProposalBackend, SensitiveDetectorBackend
from .backends.types import Box
from .errors import ConfigError

DEFAULT_TAU = 0.30
MASK_VALUE = 0  # black, all channels


@dataclass
class PromptDictionaries:
    positive: list[str]
    negative: list[str]
    tau_pos: float = DEFAULT_TAU
    tau_neg: float = DEFAULT_TAU

    def validate(self) -> None:
        if not self.positive or not self.negative:
            raise ConfigError("positive and negative prompt lists must be non-empty")
        for tau in (self.tau_pos, self.tau_neg):
            if not -1.0 <= tau <= 1.0:
                raise ConfigError("thresholds must lie in [-1, 1]")


DEFAULT_POSITIVE_PROMPTS = [
    "color fundus photograph of the retina",
    "optical coherence tomography scan",
    "ultra-widefield fundus image",
    "diabetic retinopathy",
    "retinal lesion",
]

DEFAULT_NEGATIVE_PROMPTS = [
    "portrait photograph",
    "presentation slide with text",
    "decorative graphic or logo",
    "conference room audience",
]


@dataclass
class RegionDecision:
    box: Box
    kept: bool
    max_positive_score: float
    max_negative_score: float


@dataclass
class LayoutRecord:
    canvas_w: int
    canvas_h: int
    original_boxes: list[dict] = field(default_factory=list)


def region_payload(image: np.ndarray, box: Box) -> bytes:
    """Deterministic byte serialization of a crop, used as the similarity
    backend payload (and reproducible by fixture generators)."""
    crop = image[box.y : box.y + box.h, box.x : box.x + box.w]
    header = struct.pack("<4sHHH", b"RGN1", crop.shape[0], crop.shape[1], crop.shape[2])
    return header + np.ascontiguousarray(crop, dtype=np.uint8).tobytes()


def whole_frame_box(image: np.ndarray) -> Box:
    return Box(x=0, y=0, w=image.shape[1], h=image.shape[0])


def filter_regions(
    image: np.ndarray,
    proposer: RegionProposalBackend,
    scorer: ImageTextSimilarityBackend,
    dicts: PromptDictionaries,
    image_payload: bytes,
) -> list[RegionDecision]:
    dicts.validate()
    proposal = proposer.propose_regions(image_payload)
    boxes = list(proposal.boxes)
    if not boxes:
        boxes = [whole_frame_box(image)]  # fallback: evaluate the entire frame
    decisions = []
    for box in boxes:
        box.validate(width=image.shape[1], height=image.shape[0])
        payload = region_payload(image, box)
        pos = scorer.score_image_text(payload, dicts.positive)
        neg = scorer.score_image_text(payload, dicts.negative)
        if len(pos) != len(dicts.positive) or len(neg) != len(dicts.negative):
            raise ConfigError("similarity backend returned wrong arity")
        max_pos = max(pos)
        max_neg = max(neg)
        kept = max_pos >= dicts.tau_pos and max_neg < dicts.tau_neg
        decisions.append(RegionDecision(box=box, kept=kept, max_positive_score=max_pos, max_negative_score=max_neg))
    return decisions


def compose_refined_image(image: np.ndarray, kept_boxes: Sequence[Box]) -> tuple[np.ndarray, LayoutRecord]:
    """Paste kept regions on a mask-value canvas cropped to their hull.

    Relative offsets between kept regions are preserved exactly.
    """
    if not kept_boxes:
        raise ValueError("compose requires at least one kept region")
    x0 = min(b.x for b in kept_boxes)
    y0 = min(b.y for b in kept_boxes)
    x1 = max(b.x + b.w for b in kept_boxes)
    y1 = max(b.y + b.h for b in kept_boxes)
    canvas = np.full((y1 - y0, x1 - x0, image.shape[2]), MASK_VALUE, dtype=image.dtype)
    for box in kept_boxes:
        canvas[box.y - y0 : box.y - y0 + box.h, box.x - x0 : box.x - x0 + box.w] = image[
            box.y : box.y + box.h, box.x : box.x + box.w
        ]
    layout = LayoutRecord(
        canvas_w=x1 - x0,
        canvas_h=y1 - y0,
        original_boxes=[{"x": b.x, "y": b.y, "w": b.w, "h": b.h} for b in kept_boxes],
    )
    return canvas, layout


def deidentify(
    image: np.ndarray,
    detector: SensitiveDetectorBackend,
    image_payload: bytes,
    mask_value: int = MASK_VALUE,
) -> np.ndarray:
    """Mask every pixel inside any detection box; leave the rest untouched."""
    result = detector.detect_sensitive(image_payload)
    out = image.copy()
    for det in result.detections:
        box = det.box
        box.validate()
        y1 = min(box.y + box.h, out.shape[0])
        x1 = min(box.x + box.w, out.shape[1])
        out[max(box.y, 0) : y1, max(box.x, 0) : x1] = mask_value
    return out
