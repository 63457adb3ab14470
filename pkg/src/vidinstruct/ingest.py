"""Video metadata acquisition filters.

Three ordered filters: mechanical prefilter (corruption/duration),
keyword-dictionary matching over title+description+tags, and an LLM
relevance screen. Later filters never see items rejected earlier.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .backends.base import ChatBackend
from .backends.types import ChatMessage, ChatRequest
from .errors import MalformedResponseError
from .prompts import load_template
from .synthesis import parse_llm_json

DEFAULT_MIN_DURATION_S = 60.0


@dataclass
class VideoMeta:
    video_id: str
    title: str = ""
    description: str = ""
    tags: list[str] = field(default_factory=list)
    duration_s: float = 0.0
    has_captions: bool = False
    license: str = ""
    channel: str = ""
    corrupted: bool = False

    @classmethod
    def from_dict(cls, row: dict) -> "VideoMeta":
        return cls(
            video_id=str(row["video_id"]),
            title=str(row.get("title", "")),
            description=str(row.get("description", "")),
            tags=[str(t) for t in row.get("tags", [])],
            duration_s=float(row.get("duration_s", 0.0)),
            has_captions=bool(row.get("has_captions", False)),
            license=str(row.get("license", "")),
            channel=str(row.get("channel", "")),
            corrupted=bool(row.get("corrupted", False)),
        )


@dataclass
class Decision:
    keep: bool
    reason: Optional[str] = None


@dataclass
class KeywordDictionary:
    terms: list[str]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("keyword dictionary must be non-empty")
        lowered = [t.lower().strip() for t in self.terms]
        if len(set(lowered)) != len(lowered):
            raise ValueError("keyword dictionary has duplicate terms")
        self.terms = lowered

    @classmethod
    def from_file(cls, path: Path) -> "KeywordDictionary":
        terms = [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines()]
        return cls(terms=[t for t in terms if t and not t.startswith("#")])


def prefilter(meta: VideoMeta, min_duration_s: float = DEFAULT_MIN_DURATION_S) -> Decision:
    if meta.corrupted:
        return Decision(keep=False, reason="corrupted")
    if meta.duration_s < min_duration_s:
        return Decision(keep=False, reason="too_short")
    return Decision(keep=True)


def _normalize_text(text: str) -> str:
    return re.sub(r"\s+", " ", text.lower()).strip()


def keyword_match(meta: VideoMeta, dictionary: KeywordDictionary) -> list[str]:
    """Case-insensitive whole-phrase matches over title+description+tags."""
    haystack = _normalize_text(" ".join([meta.title, meta.description, " ".join(meta.tags)]))
    matched = []
    for term in dictionary.terms:
        # whole-phrase: term bounded by non-word characters or string edges
        if re.search(r"(?<!\w)" + re.escape(term) + r"(?!\w)", haystack):
            matched.append(term)
    return matched


def build_relevance_request(meta: VideoMeta, matched_terms: list[str]) -> ChatRequest:
    template = load_template("ingest_relevance_system")
    user = (
        f"Title: {meta.title}\n"
        f"Description: {meta.description}\n"
        f"Tags: {', '.join(meta.tags)}\n"
        f"Channel: {meta.channel}\n"
        f"Matched terms: {', '.join(matched_terms)}"
    )
    return ChatRequest(system=template, messages=[ChatMessage(role="user", content=user)])


def parse_relevance(content: str) -> Decision:
    obj = parse_llm_json(content, expect="object")
    decision = obj.get("decision")
    if decision not in ("keep", "discard"):
        raise MalformedResponseError(f"relevance decision must be keep/discard, got {decision!r}")
    return Decision(keep=decision == "keep", reason=None if decision == "keep" else "llm_relevance")


def llm_relevance(meta: VideoMeta, matched_terms: list[str], backend: ChatBackend) -> Decision:
    """Single-shot relevance screen; retry policy is applied by the caller."""
    resp = backend.chat(build_relevance_request(meta, matched_terms))
    return parse_relevance(resp.content)
