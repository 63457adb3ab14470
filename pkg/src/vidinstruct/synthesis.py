"""Instruction-instance synthesis and tolerant structured-output parsing.

Three generators run per retained transcript: one VQA call per question
type, one multi-turn conversation, and (for top-scored transcripts only) a
single-turn reasoning sample. Model output is parsed tolerantly: code
fences and surrounding prose are stripped before the first balanced JSON
value of the expected shape is extracted and schema-checked.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

from .backends.types import ChatMessage, ChatRequest
from .errors import MalformedResponseError
from .prompts import fewshot_examples, load_template, render_payload_block, render_template

if TYPE_CHECKING:
    from .curation import SeparatedTranscript

QUESTION_TYPES = ("yes_no", "what", "where")
COT_TEMPERATURE = 0.4
TEMPLATE_MARKERS = ("[SCENE]", "[SUPPLEMENTAL CONTEXT]")

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\s*(.*?)```", re.DOTALL)


def parse_llm_json(text: str, expect: str = "object"):
    """Extract the first balanced JSON value of the expected shape.

    Copes with fenced code blocks and leading/trailing prose, which real
    model outputs produce despite instructions not to.
    """
    if expect not in ("object", "array"):
        raise ValueError("expect must be 'object' or 'array'")
    candidates = [m.group(1) for m in _FENCE_RE.finditer(text)]
    candidates.append(text)
    opener = "{" if expect == "object" else "["
    wanted = dict if expect == "object" else list
    decoder = json.JSONDecoder()
    for candidate in candidates:
        idx = candidate.find(opener)
        while idx != -1:
            try:
                value, _ = decoder.raw_decode(candidate[idx:])
            except json.JSONDecodeError:
                idx = candidate.find(opener, idx + 1)
                continue
            if isinstance(value, wanted):
                return value
            idx = candidate.find(opener, idx + 1)
    raise MalformedResponseError(f"no balanced JSON {expect} found in response")


@dataclass
class VqaInstance:
    image_ref: str
    modality: str
    question_type: str
    question: str
    answer: str
    generator_reasoning: str = ""

    def validate(self) -> None:
        if self.question_type not in QUESTION_TYPES:
            raise MalformedResponseError(f"unknown question_type {self.question_type!r}")
        if not self.question or not self.answer:
            raise MalformedResponseError("question/answer must be non-empty")
        if self.question_type == "yes_no" and self.answer not in ("Yes.", "No."):
            raise MalformedResponseError(f"yes_no answer must be exactly 'Yes.' or 'No.', got {self.answer!r}")
        _check_template_leakage([self.question, self.answer])


@dataclass
class ConversationInstance:
    image_ref: str
    modality: str
    turns: list[dict] = field(default_factory=list)

    def validate(self) -> None:
        n_pairs, remainder = divmod(len(self.turns), 2)
        if remainder != 0 or n_pairs not in (3, 4):
            raise MalformedResponseError(f"conversation must have 3-4 user/assistant pairs, got {len(self.turns)} turns")
        _validate_alternation(self.turns)
        _check_template_leakage([t["value"] for t in self.turns])


@dataclass
class CotInstance:
    image_ref: str
    modality: str
    user_text: str
    assistant_text: str
    temperature: float = COT_TEMPERATURE

    def validate(self) -> None:
        if not self.user_text or not self.assistant_text:
            raise MalformedResponseError("reasoning turns must be non-empty")
        _check_template_leakage([self.user_text, self.assistant_text])


def _validate_alternation(turns: list[dict]) -> None:
    expected = "user"
    for turn in turns:
        role = turn.get("from")
        if role != expected:
            raise MalformedResponseError(f"roles must alternate starting with user, got {role!r}")
        if not isinstance(turn.get("value"), str) or not turn["value"].strip():
            raise MalformedResponseError("turn value must be non-empty text")
        expected = "assistant" if expected == "user" else "user"
    if expected == "assistant":
        raise MalformedResponseError("conversation must end on an assistant turn")


def _check_template_leakage(texts: list[str]) -> None:
    for text in texts:
        for marker in TEMPLATE_MARKERS:
            if marker in text:
                raise MalformedResponseError(f"template marker {marker} leaked into instance text")


def _payload_json(sep: "SeparatedTranscript") -> str:
    return json.dumps(
        {
            "supplemental_context": sep.supplemental_context,
            "scenes": [
                {"scene_id": s.scene_id, "verbatim_scene_text": s.verbatim_scene_text} for s in sep.scenes
            ],
        },
        ensure_ascii=False,
        indent=2,
    )


def _payload_block(sep: "SeparatedTranscript") -> str:
    return render_payload_block(sep.supplemental_context, [s.verbatim_scene_text for s in sep.scenes])


def build_vqa_request(sep: "SeparatedTranscript", target_type: str, temperature: float = 0.0) -> ChatRequest:
    if target_type not in QUESTION_TYPES:
        raise ValueError(f"target_type must be one of {QUESTION_TYPES}")
    system = render_template("vqa_system", {"TARGET_TYPE": target_type})
    return ChatRequest(
        system=system,
        messages=[ChatMessage(role="user", content=_payload_json(sep))],
        temperature=temperature,
    )


def parse_vqa(content: str, sep: "SeparatedTranscript", target_type: str) -> Optional[VqaInstance]:
    obj = parse_llm_json(content, expect="object")
    question = obj.get("question")
    answer = obj.get("answer")
    if not isinstance(question, str) or not isinstance(answer, str):
        raise MalformedResponseError("question/answer must be strings")
    if question.strip().lower() == "n/a" or answer.strip().lower() == "n/a":
        return None  # escape hatch: insufficient visual evidence
    qtype = obj.get("question_type")
    if qtype != target_type:
        raise MalformedResponseError(f"question_type {qtype!r} does not echo target {target_type!r}")
    instance = VqaInstance(
        image_ref=sep.image_ref,
        modality=sep.modality,
        question_type=target_type,
        question=question.strip(),
        answer=answer.strip(),
        generator_reasoning=str(obj.get("reasoning", "")),
    )
    instance.validate()
    return instance


def build_conversation_request(sep: "SeparatedTranscript", temperature: float = 0.0) -> ChatRequest:
    system = load_template("conversation_system")
    messages: list[ChatMessage] = []
    for shot in fewshot_examples("conversation"):
        messages.append(ChatMessage(role="user", content=shot["user"]))
        messages.append(ChatMessage(role="assistant", content=shot["assistant"]))
    messages.append(ChatMessage(role="user", content=_payload_block(sep)))
    return ChatRequest(system=system, messages=messages, temperature=temperature)


def parse_conversation(content: str, sep: "SeparatedTranscript") -> ConversationInstance:
    arr = parse_llm_json(content, expect="array")
    turns = []
    for item in arr:
        if not isinstance(item, dict):
            raise MalformedResponseError("conversation turns must be objects")
        turns.append({"from": item.get("from"), "value": item.get("value")})
    instance = ConversationInstance(image_ref=sep.image_ref, modality=sep.modality, turns=turns)
    instance.validate()
    return instance


def build_cot_request(sep: "SeparatedTranscript", temperature: float = COT_TEMPERATURE) -> ChatRequest:
    system = load_template("cot_system")
    messages: list[ChatMessage] = []
    for shot in fewshot_examples("cot"):
        messages.append(ChatMessage(role="user", content=shot["user"]))
        messages.append(ChatMessage(role="assistant", content=shot["assistant"]))
    messages.append(ChatMessage(role="user", content=_payload_block(sep)))
    return ChatRequest(system=system, messages=messages, temperature=temperature)


def parse_cot(content: str, sep: "SeparatedTranscript", temperature: float = COT_TEMPERATURE) -> CotInstance:
    arr = parse_llm_json(content, expect="array")
    if len(arr) != 2:
        raise MalformedResponseError(f"reasoning output must have exactly 2 turns, got {len(arr)}")
    user, assistant = arr
    if not isinstance(user, dict) or not isinstance(assistant, dict):
        raise MalformedResponseError("reasoning turns must be objects")
    if user.get("from") != "user" or assistant.get("from") != "assistant":
        raise MalformedResponseError("reasoning turns must be one user then one assistant")
    instance = CotInstance(
        image_ref=sep.image_ref,
        modality=sep.modality,
        user_text=str(user.get("value") or ""),
        assistant_text=str(assistant.get("value") or ""),
        temperature=temperature,
    )
    instance.validate()
    return instance
