"""Open-ended VQA evaluation: extraction, rubric judging, similarity, report.

Model responses are first normalized into concise answers by an LLM
extractor (refusals map to the literal "Refusal"), judged against the
label on a five-value rubric, and scored for semantic similarity with a
greedy token-matching F1 over a token-embedding backend.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .backends.base import ChatBackend, TokenEmbeddingBackend
from .backends.types import ChatMessage, ChatRequest
from .errors import MalformedResponseError
from .prompts import load_template
from .synthesis import parse_llm_json

RUBRIC_SCORES = (0.0, 0.25, 0.5, 0.75, 1.0)
REFUSAL = "Refusal"
_ANSWER_DELIMS = ("<answer>", "</answer>")


@dataclass
class JudgeVerdict:
    reasoning: str
    score: float

    def validate(self) -> None:
        if self.score not in RUBRIC_SCORES:
            raise MalformedResponseError(f"score {self.score!r} not in the rubric set")


@dataclass
class EvalRecord:
    question: str
    label: str
    scene_texts: list[str] = field(default_factory=list)
    supplemental_context: list[str] = field(default_factory=list)
    raw_response: str = ""
    extracted_answer: str = ""
    verdict: Optional[JudgeVerdict] = None
    similarity_f1: Optional[float] = None
    similarity_degenerate: bool = False


def strip_answer_markers(response: str) -> str:
    """Keep only the content between answer delimiters, when present.

    Used for reasoning-style model outputs that wrap the final answer.
    """
    start, end = _ANSWER_DELIMS
    if start in response and end in response:
        return response.split(start, 1)[1].split(end, 1)[0].strip()
    return response


def extract_answer(question: str, response: str, backend: ChatBackend) -> str:
    if not response.strip():
        return REFUSAL
    req = ChatRequest(
        system=load_template("extractor_system"),
        messages=[ChatMessage(role="user", content=f"Question: {question}\nResponse: {response}")],
    )
    answer = backend.chat(req).content.strip()
    if not answer:
        return REFUSAL
    if answer.strip("'\". ").lower() == "refusal":
        return REFUSAL
    return answer


def build_judge_request(record: EvalRecord, temperature: float = 0.0) -> ChatRequest:
    lines = ["[SUPPLEMENTAL CONTEXT]"]
    lines += [f"- {c}" for c in record.supplemental_context]
    lines.append("")
    lines.append("[SCENE]")
    lines += [f"Scene {k}: {s}" for k, s in enumerate(record.scene_texts, start=1)]
    lines.append("")
    lines.append(f"[Question]\n{record.question}")
    lines.append(f"[LABEL]\n{record.label}")
    lines.append(f"[RESPONSE]\n{record.extracted_answer}")
    return ChatRequest(
        system=load_template("judge_system"),
        messages=[ChatMessage(role="user", content="\n".join(lines))],
        temperature=temperature,
    )


def parse_judge(content: str) -> JudgeVerdict:
    obj = parse_llm_json(content, expect="object")
    score = obj.get("score")
    if not isinstance(score, (int, float)) or isinstance(score, bool):
        raise MalformedResponseError("judge score must be numeric")
    verdict = JudgeVerdict(reasoning=str(obj.get("reasoning", "")), score=float(score))
    verdict.validate()
    return verdict


def judge(record: EvalRecord, backend: ChatBackend) -> JudgeVerdict:
    if not record.label:
        raise ValueError("label must be non-empty")
    if record.extracted_answer == REFUSAL:
        return JudgeVerdict(reasoning="model refused to answer", score=0.0)
    verdict = parse_judge(backend.chat(build_judge_request(record)).content)
    return verdict


def tokenize(text: str) -> list[str]:
    return [t for t in re.split(r"[^\w]+", text.lower()) if t]


def semantic_similarity(
    prediction: str,
    reference: str,
    backend: TokenEmbeddingBackend,
) -> tuple[float, bool]:
    """Greedy-matching token F1 over pairwise cosine similarities.

    Precision is the mean row maximum over prediction tokens, recall the
    mean column maximum over reference tokens. Returns (score, degenerate)
    where degenerate flags empty tokenization.
    """
    pred_tokens = tokenize(prediction)
    ref_tokens = tokenize(reference)
    if not pred_tokens or not ref_tokens:
        return 0.0, True
    if pred_tokens == ref_tokens:
        return 1.0, False
    pred_emb = np.asarray(backend.embed_tokens(pred_tokens), dtype=np.float64)
    ref_emb = np.asarray(backend.embed_tokens(ref_tokens), dtype=np.float64)
    pred_norm = pred_emb / np.linalg.norm(pred_emb, axis=1, keepdims=True)
    ref_norm = ref_emb / np.linalg.norm(ref_emb, axis=1, keepdims=True)
    sim = pred_norm @ ref_norm.T
    precision = float(np.mean(np.max(sim, axis=1)))
    recall = float(np.mean(np.max(sim, axis=0)))
    if precision + recall == 0.0:
        return 0.0, False
    return 2 * precision * recall / (precision + recall), False


def evaluate_record(
    record: EvalRecord,
    extractor_backend: ChatBackend,
    judge_backend: ChatBackend,
    token_backend: TokenEmbeddingBackend,
    strip_markers: bool = False,
) -> EvalRecord:
    response = strip_answer_markers(record.raw_response) if strip_markers else record.raw_response
    record.extracted_answer = extract_answer(record.question, response, extractor_backend)
    record.verdict = judge(record, judge_backend)
    score, degenerate = semantic_similarity(record.extracted_answer, record.label, token_backend)
    record.similarity_f1 = score
    record.similarity_degenerate = degenerate
    return record


def aggregate_report(records_by_subtype: dict[str, list[EvalRecord]]) -> dict:
    """Per-subtype and average means x 100 at two decimals, plus counters."""
    rows = {}
    warnings = []
    judged_means = []
    sim_means = []
    for subtype, records in records_by_subtype.items():
        if not records:
            warnings.append(f"subtype {subtype!r} has no records; row omitted")
            continue
        llm = float(np.mean([r.verdict.score for r in records if r.verdict is not None]))
        sim = float(np.mean([r.similarity_f1 for r in records if r.similarity_f1 is not None]))
        rows[subtype] = {
            "count": len(records),
            "llm_score": round(llm * 100, 2),
            "similarity_f1": round(sim * 100, 2),
            "refusals": sum(1 for r in records if r.extracted_answer == REFUSAL),
        }
        judged_means.append(llm)
        sim_means.append(sim)
    report = {
        "subtypes": rows,
        "warnings": warnings,
    }
    if judged_means:
        report["average"] = {
            "llm_score": round(float(np.mean(judged_means)) * 100, 2),
            "similarity_f1": round(float(np.mean(sim_means)) * 100, 2),
        }
    return report


def format_report_table(report: dict) -> str:
    header = f"{'subtype':<12}{'n':>6}{'LLM':>9}{'B-score':>10}{'refusals':>10}"
    lines = [header, "-" * len(header)]
    for subtype, row in report["subtypes"].items():
        lines.append(
            f"{subtype:<12}{row['count']:>6}{row['llm_score']:>9.2f}{row['similarity_f1']:>10.2f}{row['refusals']:>10}"
        )
    if "average" in report:
        avg = report["average"]
        lines.append(f"{'average':<12}{'':>6}{avg['llm_score']:>9.2f}{avg['similarity_f1']:>10.2f}{'':>10}")
    return "\n".join(lines)
