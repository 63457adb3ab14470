"""Post-synthesis keep/discard verification and expert audit sampling.

Each synthesized instance is re-checked by an LLM verifier against its
separated transcript; only keep-labeled instances flow to assembly. A
seed-deterministic stratified sample of the assembled corpus can be
exported for expert review and the resulting decisions applied back.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Optional

from .backends.types import ChatMessage, ChatRequest
from .curation import SeparatedTranscript
from .dataset import DatasetManifest, proportional_allocation
from .errors import MalformedResponseError
from .prompts import load_template, render_payload_block
from .synthesis import parse_llm_json

_CHECK_TEMPLATES = {
    "vqa": ("vqa_check_system", "[VQA CONTENT]"),
    "conversation": ("conversation_check_system", "[CONVERSATION]"),
    "cot": ("cot_check_system", "[REASONING CONTENT]"),
}


@dataclass
class VerificationDecision:
    instance_ref: str
    kind: str
    reasoning: str
    answer: str  # "keep" | "discard"

    def validate(self) -> None:
        if self.answer not in ("keep", "discard"):
            raise MalformedResponseError(f"verification answer must be keep/discard, got {self.answer!r}")
        if self.kind not in _CHECK_TEMPLATES:
            raise MalformedResponseError(f"unknown verification kind {self.kind!r}")


def _instance_conversation_json(rec: dict) -> str:
    if rec["kind"] == "vqa":
        turns = [
            {"from": "user", "value": rec["question"]},
            {"from": "assistant", "value": rec["answer"]},
        ]
    elif rec["kind"] == "cot":
        turns = [
            {"from": "user", "value": rec["user_text"]},
            {"from": "assistant", "value": rec["assistant_text"]},
        ]
    else:
        turns = rec["turns"]
    return json.dumps(turns, ensure_ascii=False, indent=2)


def build_verification_request(rec: dict, sep: SeparatedTranscript, temperature: float = 0.0) -> ChatRequest:
    template_name, content_header = _CHECK_TEMPLATES[rec["kind"]]
    block = render_payload_block(sep.supplemental_context, [s.verbatim_scene_text for s in sep.scenes])
    user = f"{block}\n{content_header}\n{_instance_conversation_json(rec)}\n"
    return ChatRequest(
        system=load_template(template_name),
        messages=[ChatMessage(role="user", content=user)],
        temperature=temperature,
    )


def parse_verification(content: str, instance_ref: str, kind: str) -> VerificationDecision:
    obj = parse_llm_json(content, expect="object")
    answer = obj.get("answer")
    if not isinstance(answer, str):
        raise MalformedResponseError("verification answer missing")
    normalized = answer.strip().lower()
    decision = VerificationDecision(
        instance_ref=instance_ref,
        kind=kind,
        reasoning=str(obj.get("reasoning", "")),
        answer=normalized,
    )
    decision.validate()
    return decision


# --- expert audit ---------------------------------------------------------


def sample_for_audit(
    manifest: DatasetManifest,
    n: int,
    seed: int,
    strata_fields: Optional[list[str]] = None,
) -> list[dict]:
    """Stratified proportional sample with largest-remainder rounding.

    Default strata are kind x modality. Returns full-provenance bundle
    rows with empty reviewer decision slots.
    """
    if n <= 0:
        raise ValueError("audit sample size must be positive")
    if not manifest.instances:
        raise ValueError("cannot audit an empty manifest")
    strata_fields = strata_fields or ["kind", "modality"]

    def stratum(rec: dict) -> tuple:
        return tuple(str(rec.get(f)) for f in strata_fields)

    groups: dict[tuple, list[dict]] = {}
    for rec in manifest.instances:
        groups.setdefault(stratum(rec), []).append(rec)
    alloc = proportional_allocation({k: len(v) for k, v in groups.items()}, n)
    bundle = []
    for key in sorted(groups):
        members = sorted(groups[key], key=lambda r: r["instance_id"])
        rng = Random(f"{seed}:{key}")
        for rec in rng.sample(members, alloc[key]):
            bundle.append(
                {
                    "instance_id": rec["instance_id"],
                    "stratum": list(key),
                    "instance": rec,
                    "provenance": rec.get("provenance", {}),
                    "reviewer_decision": None,
                    "reviewer_notes": "",
                }
            )
    return sorted(bundle, key=lambda row: row["instance_id"])


def write_audit_bundle(bundle: list[dict], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in bundle:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def read_decisions(path: Path) -> list[dict]:
    decisions = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                decisions.append(json.loads(line))
    return decisions


def apply_audit(decisions: list[dict], manifest: DatasetManifest) -> DatasetManifest:
    """Remove expert-discarded instances; append the audit trail.

    Any decision referencing an unknown instance is an error and leaves
    the manifest untouched.
    """
    known = {rec["instance_id"] for rec in manifest.instances}
    to_remove = set()
    for dec in decisions:
        ref = dec.get("instance_id")
        if ref not in known:
            raise ValueError(f"audit decision references unknown instance {ref!r}")
        verdict = str(dec.get("reviewer_decision", "")).strip().lower()
        if verdict not in ("keep", "discard"):
            raise ValueError(f"reviewer_decision must be keep/discard, got {dec.get('reviewer_decision')!r}")
        if verdict == "discard":
            to_remove.add(ref)
    remaining = [rec for rec in manifest.instances if rec["instance_id"] not in to_remove]
    trail = list(manifest.audit_trail) + [
        {"decisions": len(decisions), "removed": sorted(to_remove)}
    ]
    out = DatasetManifest(run_id=manifest.run_id, instances=remaining, audit_trail=trail)
    out.validate()
    return out
