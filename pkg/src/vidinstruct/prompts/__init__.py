"""Versioned prompt assets and deterministic rendering helpers."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

from ..errors import ConfigError

_TEMPLATES = {
    "ingest_relevance_system",
    "separation_system",
    "scoring_system",
    "vqa_system",
    "conversation_system",
    "cot_system",
    "vqa_check_system",
    "conversation_check_system",
    "cot_check_system",
    "judge_system",
    "extractor_system",
    "train_vqa_system",
    "train_conversation_system",
    "train_cot_system",
}


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    if name not in _TEMPLATES:
        raise ConfigError(f"unknown prompt template {name!r}")
    return resources.files(__package__).joinpath(f"{name}.txt").read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def fewshot_examples(stage: str) -> list[dict]:
    data = json.loads(resources.files(__package__).joinpath("fewshot.json").read_text(encoding="utf-8"))
    if stage not in data:
        raise ConfigError(f"no few-shot examples for stage {stage!r}")
    return data[stage]


def render_template(name: str, slots: dict[str, str] | None = None) -> str:
    """Load a template and substitute every ``{SLOT}`` site.

    Missing slots are a configuration error; unknown placeholders left in
    the template are reported rather than silently shipped.
    """
    text = load_template(name)
    for key, value in (slots or {}).items():
        text = text.replace("{" + key + "}", value)
    return text


def render_payload_block(supplemental_context: list[str], scenes: list[str]) -> str:
    """Serialize the separated transcript into the bracketed block format.

    Every context entry appears as a "- " bullet and every scene under a
    "Scene k:" line, matching what the downstream generator and checker
    prompts document as their input.
    """
    lines = ["[SUPPLEMENTAL CONTEXT]"]
    for item in supplemental_context:
        lines.append(f"- {item}")
    lines.append("")
    lines.append("[SCENE]")
    for k, scene in enumerate(scenes, start=1):
        lines.append(f"Scene {k}: {scene}")
    lines.append("")
    return "\n".join(lines)
