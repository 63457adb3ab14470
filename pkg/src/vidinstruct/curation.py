"""Transcript cue separation and four-metric quality scoring with gates.

Raw ASR text is decoupled into verbatim Scenes (explicit visual content)
and Supplemental Context (clinical background), then scored on Quality,
Difficulty, Relevance2Medicine, and MentionSpecificDetails. Deterministic
threshold gates over those scores decide retention and reasoning-sample
eligibility.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field

from .backends.types import ChatMessage, ChatRequest
from .errors import MalformedResponseError, QuarantineError
from .prompts import fewshot_examples, load_template
from .synthesis import parse_llm_json


@dataclass
class Scene:
    scene_id: int
    verbatim_scene_text: str


@dataclass
class SeparatedTranscript:
    supplemental_context: list[str]
    scenes: list[Scene]
    # downstream provenance, filled by the pipeline
    image_ref: str = ""
    modality: str = ""

    @property
    def scene_count(self) -> int:
        return len(self.scenes)

    def to_dict(self) -> dict:
        return {
            "supplemental_context": self.supplemental_context,
            "scene_count": self.scene_count,
            "scenes": [{"scene_id": s.scene_id, "verbatim_scene_text": s.verbatim_scene_text} for s in self.scenes],
            "image_ref": self.image_ref,
            "modality": self.modality,
        }

    @classmethod
    def from_dict(cls, row: dict) -> "SeparatedTranscript":
        return cls(
            supplemental_context=[str(x) for x in row.get("supplemental_context", [])],
            scenes=[Scene(int(s["scene_id"]), str(s["verbatim_scene_text"])) for s in row.get("scenes", [])],
            image_ref=str(row.get("image_ref", "")),
            modality=str(row.get("modality", "")),
        )


@dataclass
class QualityScore:
    reasoning: str
    quality: int
    difficulty: int
    relevance2medicine: int
    mention_specific_details: bool

    def validate(self) -> None:
        if not 1 <= self.quality <= 10:
            raise MalformedResponseError(f"quality {self.quality} outside 1-10")
        if not 1 <= self.difficulty <= 10:
            raise MalformedResponseError(f"difficulty {self.difficulty} outside 1-10")
        if not 1 <= self.relevance2medicine <= 6:
            raise MalformedResponseError(f"relevance2medicine {self.relevance2medicine} outside 1-6")
        if not isinstance(self.mention_specific_details, bool):
            raise MalformedResponseError("mention_specific_details must be boolean")


@dataclass
class GateConfig:
    min_relevance: int = 3
    require_details: bool = True
    cot_min_quality: int = 9
    cot_min_difficulty: int = 9
    cot_min_relevance: int = 5

    def validate(self) -> None:
        if not 1 <= self.min_relevance <= 6 or not 1 <= self.cot_min_relevance <= 6:
            raise ValueError("relevance gates must lie in 1-6")
        if not 1 <= self.cot_min_quality <= 10 or not 1 <= self.cot_min_difficulty <= 10:
            raise ValueError("quality/difficulty gates must lie in 1-10")


_QUOTE_MAP = str.maketrans({"‘": "'", "’": "'", "“": '"', "”": '"'})


def normalize_for_match(text: str) -> str:
    """NFC, straight quotes, whitespace runs collapsed; case preserved.

    ASR output has irregular spacing, so strict byte equality would reject
    valid verbatim extractions.
    """
    text = unicodedata.normalize("NFC", text).translate(_QUOTE_MAP)
    return re.sub(r"\s+", " ", text).strip()


def is_verbatim(scene_text: str, raw_transcript: str) -> bool:
    return normalize_for_match(scene_text) in normalize_for_match(raw_transcript)


def build_separation_request(raw_transcript: str, temperature: float = 0.0) -> ChatRequest:
    system = load_template("separation_system")
    messages: list[ChatMessage] = []
    for shot in fewshot_examples("separation"):
        messages.append(ChatMessage(role="user", content=shot["user"]))
        messages.append(ChatMessage(role="assistant", content=shot["assistant"]))
    messages.append(ChatMessage(role="user", content=f"Raw transcript:\n{raw_transcript}"))
    return ChatRequest(system=system, messages=messages, temperature=temperature)


def parse_separation(content: str, raw_transcript: str) -> SeparatedTranscript:
    """Parse and enforce the verbatim-substring invariant.

    Scenes failing the substring check are rejected individually; if all
    scenes fail, the item is quarantined.
    """
    obj = parse_llm_json(content, expect="object")
    raw_scenes = obj.get("scenes")
    if not isinstance(raw_scenes, list) or not raw_scenes:
        raise MalformedResponseError("separation output must contain a non-empty scenes array")
    context = obj.get("supplemental_context")
    if not isinstance(context, list):
        raise MalformedResponseError("supplemental_context must be a list")
    kept: list[Scene] = []
    for entry in raw_scenes:
        if not isinstance(entry, dict):
            raise MalformedResponseError("scene entries must be objects")
        text = entry.get("verbatim_scene_text")
        if not isinstance(text, str) or not text.strip():
            raise MalformedResponseError("verbatim_scene_text must be non-empty")
        if is_verbatim(text, raw_transcript):
            kept.append(Scene(scene_id=len(kept) + 1, verbatim_scene_text=text))
    if not kept:
        raise QuarantineError("separation: no scene survived the verbatim-substring check")
    return SeparatedTranscript(
        supplemental_context=[str(x) for x in context],
        scenes=kept,
    )


def build_scoring_request(sep: SeparatedTranscript, temperature: float = 0.0) -> ChatRequest:
    import json as _json

    system = load_template("scoring_system")
    messages: list[ChatMessage] = []
    for shot in fewshot_examples("scoring"):
        messages.append(ChatMessage(role="user", content=shot["user"]))
        messages.append(ChatMessage(role="assistant", content=shot["assistant"]))
    payload = _json.dumps(
        {
            "supplemental_context": sep.supplemental_context,
            "scenes": [{"scene_id": s.scene_id, "verbatim_scene_text": s.verbatim_scene_text} for s in sep.scenes],
        },
        ensure_ascii=False,
    )
    messages.append(ChatMessage(role="user", content=payload))
    return ChatRequest(system=system, messages=messages, temperature=temperature)


def parse_score(content: str) -> QualityScore:
    obj = parse_llm_json(content, expect="object")
    try:
        score = QualityScore(
            reasoning=str(obj.get("reasoning", "")),
            quality=int(obj["quality"]),
            difficulty=int(obj["difficulty"]),
            relevance2medicine=int(obj["Relevance2Medicine"]),
            mention_specific_details=obj["MentionSpecificDetails"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponseError(f"scoring output missing/invalid fields: {exc}") from exc
    score.validate()
    return score


def passes_gate(score: QualityScore, gate: GateConfig) -> bool:
    score.validate()
    if score.relevance2medicine < gate.min_relevance:
        return False
    if gate.require_details and not score.mention_specific_details:
        return False
    return True


def cot_eligible(score: QualityScore, gate: GateConfig) -> bool:
    score.validate()
    return (
        score.quality >= gate.cot_min_quality
        and score.difficulty >= gate.cot_min_difficulty
        and score.relevance2medicine >= gate.cot_min_relevance
        and score.mention_specific_details
    )
