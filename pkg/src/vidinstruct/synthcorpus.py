"""Generator for the shipped synthetic corpus used in tests and demos.

Builds a complete corpus directory (metadata, embeddings, frames,
transcripts) plus the scripted mock fixture tables that drive a full
offline pipeline run. Every gate and failure branch is exercised by at
least one video: prefilter rejections, keyword misses, LLM relevance
discards, low keyframe probability, missing clinical regions, paraphrased
scene quarantine, malformed-output quarantine, score-gate discards, the
N/A escape hatch, verification discards, sensitive-region masking,
multi-region composition, and multi-episode segmentation.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from . import refiner, segmenter
from .backends.types import Box, payload_digest

EMBED_DIM = 8
FRAME_SIZE = 24

_LOCATIONS = (
    "superior temporal arcade",
    "inferior nasal quadrant",
    "foveal center",
    "peripapillary region",
    "temporal periphery",
)

_CONDITIONS = (
    "microaneurysms",
    "hard exudates",
    "macular edema",
    "subretinal fluid",
    "laser scars",
    "drusen",
    "macular hole",
    "retinal tear",
    "epiretinal membrane",
    "vitreous hemorrhage",
)


@dataclass
class VideoSpec:
    vid: str
    scenario: str = "pass"
    condition: str = ""
    location: str = ""
    modality: str = "CFP"
    scores: tuple = (8, 7, 5, True)
    na_types: tuple = ()
    verify_discard: tuple = ()  # e.g. ("conversation", "vqa:what")
    regions: tuple = ()  # explicit proposal boxes (x, y, w, h)
    sensitive: bool = False

    @property
    def marker(self) -> str:
        return f"MK{self.vid.upper()}"

    @property
    def title(self) -> str:
        if self.scenario == "no_keyword":
            return f"Gardening techniques for beginners {self.vid}"
        return f"Retina imaging case review {self.vid}"

    @property
    def cot(self) -> bool:
        q, d, r, det = self.scores
        return q >= 9 and d >= 9 and r >= 5 and det

    def question(self, subtype: str) -> str:
        return {
            "yes_no": f"Is there evidence of {self.condition} in this image?",
            "what": f"What finding is visible in the {self.location}?",
            "where": f"Where are the {self.condition} located?",
        }[subtype]

    def answer(self, subtype: str) -> str:
        return {
            "yes_no": "Yes.",
            "what": self.condition.capitalize(),
            "where": self.location.capitalize(),
        }[subtype]


def default_specs() -> list[VideoSpec]:
    specs = [
        VideoSpec("v01"),
        VideoSpec("v02", scores=(9, 9, 5, True)),  # reasoning-gate boundary: eligible
        VideoSpec("v03", scores=(10, 8, 6, True)),  # difficulty one short: not eligible
        VideoSpec("v04", scenario="too_short"),
        VideoSpec("v05", scenario="corrupted"),
        VideoSpec("v06", scenario="no_keyword"),
        VideoSpec("v07", scenario="llm_discard"),
        VideoSpec("v08", scores=(6, 5, 2, True)),  # relevance below gate
        VideoSpec("v09", scores=(7, 6, 4, False)),  # no specific details
        VideoSpec("v10", na_types=("where",), scores=(8, 6, 4, True)),
        VideoSpec("v11", scenario="malformed_scoring"),
        VideoSpec("v12", scenario="low_keyframe"),
        VideoSpec("v13", scenario="paraphrase"),
        VideoSpec("v14", verify_discard=("conversation",)),
        VideoSpec("v15", verify_discard=("conversation", "vqa:yes_no", "vqa:what", "vqa:where")),
        VideoSpec("v16", scenario="no_region"),
        VideoSpec("v17", sensitive=True),
        VideoSpec("v18", regions=((2, 2, 8, 8), (12, 12, 8, 8))),
        VideoSpec("v19", scenario="two_episodes"),
        VideoSpec("v20", modality="OCT"),
        VideoSpec("v21", modality="UWF"),
        VideoSpec("v22", scenario="no_transcript"),
        VideoSpec("v23", verify_discard=("conversation", "vqa:what", "vqa:where")),
        VideoSpec("v24", verify_discard=("conversation", "vqa:yes_no", "vqa:where")),
        VideoSpec("v25", verify_discard=("conversation", "vqa:yes_no", "vqa:what")),
    ]
    for i, spec in enumerate(specs):
        if not spec.condition:
            spec.condition = _CONDITIONS[i % len(_CONDITIONS)]
        if not spec.location:
            spec.location = _LOCATIONS[i % len(_LOCATIONS)]
    return specs


# Hand-computed terminal accounting for default_specs(), used by tests.
EXPECTED = {
    "input_items": 25,
    "assembled": 13,
    "discarded": 10,
    "quarantined": 2,
    "instances": 46,
    "discard_reasons": {
        "prefilter: too_short": 1,
        "prefilter: corrupted": 1,
        "keyword: no_match": 1,
        "llm_relevance": 1,
        "gate: relevance": 1,
        "gate: details": 1,
        "keyframe: low_probability": 1,
        "no_clinical_region": 1,
        "no_transcript": 1,
        "verify: all_instances_discarded": 1,
    },
    "single_instance_subtypes": {"yes_no": 1, "what": 1, "where": 1},
}


def _frame_array(video_index: int, frame_index: int) -> np.ndarray:
    color = (
        (40 + 29 * video_index) % 256,
        (90 + 53 * frame_index) % 256,
        (160 + 17 * (video_index + frame_index)) % 256,
    )
    arr = np.zeros((FRAME_SIZE, FRAME_SIZE, 3), dtype=np.uint8)
    arr[:, :] = color
    return arr


def _png_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


@dataclass
class _Fixtures:
    chat_rules: list = field(default_factory=list)
    classifier: dict = field(default_factory=dict)
    regions: dict = field(default_factory=dict)
    similarity: dict = field(default_factory=dict)
    detector: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "chat_rules": self.chat_rules,
            "classifier": self.classifier,
            "regions": self.regions,
            "similarity": self.similarity,
            "detector": self.detector,
        }


def _scene_sentence(spec: VideoSpec) -> str:
    return f"{spec.marker} here you can clearly see {spec.condition} in the {spec.location}"


def _context_sentence(spec: VideoSpec) -> str:
    return f"This patient was referred last month and we will discuss management of {spec.condition} later"


def _transcript_text(spec: VideoSpec) -> str:
    return f"{_scene_sentence(spec)}. {_context_sentence(spec)}."


def _separation_response(spec: VideoSpec, paraphrase: bool = False) -> str:
    scene = _scene_sentence(spec)
    if paraphrase:
        scene = f"{spec.marker} the image demonstrates {spec.condition} rephrased freely"
    return json.dumps(
        {
            "supplemental_context": [_context_sentence(spec)],
            "scene_count": 1,
            "scenes": [{"scene_id": 1, "verbatim_scene_text": scene}],
        }
    )


def _scoring_response(spec: VideoSpec) -> str:
    q, d, r, det = spec.scores
    return json.dumps(
        {
            "reasoning": f"Clear description of {spec.condition} with spatial cues.",
            "quality": q,
            "difficulty": d,
            "Relevance2Medicine": r,
            "MentionSpecificDetails": det,
        }
    )


def _vqa_response(spec: VideoSpec, subtype: str) -> str:
    if subtype in spec.na_types:
        return json.dumps(
            {
                "reasoning": "The scenes carry no information for this question type.",
                "question_type": subtype,
                "question": "N/A",
                "answer": "N/A",
            }
        )
    return json.dumps(
        {
            "reasoning": f"Grounded in the verbatim scene about {spec.condition}.",
            "question_type": subtype,
            "question": spec.question(subtype),
            "answer": spec.answer(subtype),
        }
    )


def _conversation_response(spec: VideoSpec) -> str:
    turns = [
        {"from": "user", "value": "What stands out in this image?"},
        {"from": "assistant", "value": f"There are {spec.condition} visible in the {spec.location}."},
        {"from": "user", "value": "What typically causes that finding?"},
        {"from": "assistant", "value": f"Such {spec.condition} usually reflect underlying retinal vascular changes."},
        {"from": "user", "value": "Would you recommend further imaging?"},
        {"from": "assistant", "value": "Follow-up imaging can help, but please consult an ophthalmologist for advice."},
    ]
    return json.dumps(turns)


def _cot_response(spec: VideoSpec) -> str:
    turns = [
        {"from": "user", "value": f"Why do the {spec.condition} appear in the {spec.location}?"},
        {
            "from": "assistant",
            "value": (
                f"The image shows {spec.condition} concentrated in the {spec.location}. "
                "Based on these visual features, the distribution follows the regional vascular supply. "
                "Clinically, this correlates with localized capillary compromise, which explains the finding."
            ),
        },
    ]
    return json.dumps(turns)


_KEEP = json.dumps({"reasoning": "Faithful to the provided scenes.", "answer": "keep"})
_DISCARD = json.dumps({"reasoning": "Breaks persona or invents details.", "answer": "discard"})

# Stage-distinctive substrings taken from the system prompts.
_SEPARATION_KEY = "expert ophthalmic data curator"
_SCORING_KEY = "multimodal ophthalmology datasets"
_VQA_KEY = "expert ophthalmic data engineer"
_CONVERSATION_KEY = "generate a conversation between a person (User)"
_COT_KEY = "single-turn conversational data for Supervised Fine-Tuning"
_RELEVANCE_KEY = "strict metadata screener"
_VQA_CHECK_KEY = "Visual Question Answering (VQA) data"
_CONVERSATION_CHECK_KEY = "evaluate multi-turn conversation data"
_COT_CHECK_KEY = "evaluate single-turn Chain-of-Thought"


def _chat_rules_for(spec: VideoSpec) -> list[dict]:
    rules: list[dict] = []
    mk = spec.marker
    if spec.scenario == "llm_discard":
        rules.append(
            {
                "match": [_RELEVANCE_KEY, f"Title: {spec.title}"],
                "response": json.dumps({"reasoning": "Off-topic despite keyword hit.", "decision": "discard"}),
            }
        )
        return rules
    if spec.scenario in ("too_short", "corrupted", "no_keyword", "low_keyframe", "no_region", "no_transcript"):
        return rules
    paraphrase = spec.scenario == "paraphrase"
    rules.append({"match": [_SEPARATION_KEY, mk], "response": _separation_response(spec, paraphrase=paraphrase)})
    if paraphrase:
        return rules
    if spec.scenario == "malformed_scoring":
        rules.append({"match": [_SCORING_KEY, mk], "response": "The quality is high, I promise."})
        return rules
    rules.append({"match": [_SCORING_KEY, mk], "response": _scoring_response(spec)})
    for subtype in ("yes_no", "what", "where"):
        rules.append(
            {
                "match": [_VQA_KEY, f'"question_type": "{subtype}"', mk],
                "response": _vqa_response(spec, subtype),
            }
        )
    rules.append({"match": [_CONVERSATION_KEY, mk], "response": _conversation_response(spec)})
    if spec.cot:
        rules.append({"match": [_COT_KEY, mk], "response": _cot_response(spec)})
    # verification: specific discards first, generic keeps are appended once
    for target in spec.verify_discard:
        if target == "conversation":
            rules.append({"match": [_CONVERSATION_CHECK_KEY, mk], "response": _DISCARD})
        elif target.startswith("vqa:"):
            subtype = target.split(":", 1)[1]
            rules.append(
                {"match": [_VQA_CHECK_KEY, mk, spec.question(subtype)], "response": _DISCARD}
            )
        elif target == "cot":
            rules.append({"match": [_COT_CHECK_KEY, mk], "response": _DISCARD})
    return rules


def _generic_rules() -> list[dict]:
    keep_decision = json.dumps({"reasoning": "Relevant clinical teaching material.", "decision": "keep"})
    return [
        {"match": [_RELEVANCE_KEY], "response": keep_decision},
        {"match": [_VQA_CHECK_KEY], "response": _KEEP},
        {"match": [_CONVERSATION_CHECK_KEY], "response": _KEEP},
        {"match": [_COT_CHECK_KEY], "response": _KEEP},
    ]


def _write_media(
    root: Path,
    spec: VideoSpec,
    video_index: int,
    fixtures: _Fixtures,
) -> None:
    """Embeddings, frames, classifier/similarity/region/detector fixtures."""
    two_eps = spec.scenario == "two_episodes"
    n_frames = 6 if two_eps else 3
    basis = np.eye(EMBED_DIM)
    emb = np.stack([basis[0] if i < 3 else basis[1] for i in range(n_frames)])
    timestamps = [float(i) for i in range(n_frames)]
    emb_dir = root / "embeddings"
    emb_dir.mkdir(exist_ok=True)
    segmenter.write_embeddings(emb_dir / f"{spec.vid}.bin", emb, timestamps)

    frame_dir = root / "frames" / spec.vid
    frame_dir.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for i in range(n_frames):
        arr = _frame_array(video_index, i)
        arrays[i] = arr
        png = _png_bytes(arr)
        (frame_dir / f"f{i:04d}.png").write_bytes(png)
        if spec.scenario == "low_keyframe":
            prob = 0.2
        else:
            prob = 0.9 if i in (1, 4) else 0.35
        fixtures.classifier[payload_digest(png)] = {
            "retinal_probability": prob,
            "modality": spec.modality,
            "modality_confidence": 0.95,
        }

    if spec.scenario == "low_keyframe":
        return

    keyframes = [1, 4] if two_eps else [1]
    for kf in keyframes:
        arr = arrays[kf]
        png = _png_bytes(arr)
        if spec.regions:
            boxes = [Box(*r) for r in spec.regions]
            fixtures.regions[payload_digest(png)] = [
                {"x": b.x, "y": b.y, "w": b.w, "h": b.h} for b in boxes
            ]
        else:
            boxes = [refiner.whole_frame_box(arr)]
        for box in boxes:
            digest = payload_digest(refiner.region_payload(arr, box))
            if spec.scenario == "no_region":
                fixtures.similarity[digest] = {"default": 0.05}
            else:
                fixtures.similarity[digest] = {
                    refiner.DEFAULT_POSITIVE_PROMPTS[0]: 0.62,
                    "default": 0.05,
                }
        if spec.sensitive:
            composed, _ = refiner.compose_refined_image(arr, boxes)
            fixtures.detector[payload_digest(_png_bytes(composed))] = [
                {"x": 0, "y": 0, "w": 6, "h": 6, "confidence": 0.99}
            ]


def _write_transcript(root: Path, spec: VideoSpec) -> None:
    if spec.scenario == "no_transcript":
        return
    tdir = root / "transcripts"
    tdir.mkdir(exist_ok=True)
    if spec.scenario == "two_episodes":
        rows = [
            {"start_s": 0.0, "end_s": 2.5, "text": _transcript_text(spec)},
            {"start_s": 3.5, "end_s": 6.0, "text": "And moving on to the next slide now."},
        ]
    else:
        rows = [{"start_s": 0.0, "end_s": 6.0, "text": _transcript_text(spec)}]
    (tdir / f"{spec.vid}.json").write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")


def build_corpus(root: Path, specs: Optional[list[VideoSpec]] = None) -> Path:
    """Materialize the synthetic corpus under ``root`` and return it."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    specs = specs if specs is not None else default_specs()
    fixtures = _Fixtures()

    with open(root / "videos.jsonl", "w", encoding="utf-8") as fh:
        for spec in specs:
            row = {
                "video_id": spec.vid,
                "title": spec.title,
                "description": f"Recorded teaching session on {spec.condition} ({spec.vid}).",
                "tags": ["education"],
                "duration_s": 30.0 if spec.scenario == "too_short" else 120.0,
                "has_captions": True,
                "license": "CC-BY",
                "channel": "Synthetic Grand Rounds",
                "corrupted": spec.scenario == "corrupted",
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")

    for i, spec in enumerate(specs):
        fixtures.chat_rules.extend(_chat_rules_for(spec))
        if spec.scenario in ("too_short", "corrupted", "no_keyword", "llm_discard"):
            continue  # never reaches segmentation, no media needed
        _write_media(root, spec, i, fixtures)
        _write_transcript(root, spec)

    fixtures.chat_rules.extend(_generic_rules())
    (root / "mock_fixtures.json").write_text(
        json.dumps(fixtures.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return root
