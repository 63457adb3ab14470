from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidinstruct.backends.mocks import HashedOneHotTokenEmbedder, ScriptedChatBackend
from vidinstruct.errors import MalformedResponseError
from vidinstruct.evalharness import (
    REFUSAL,
    RUBRIC_SCORES,
    EvalRecord,
    aggregate_report,
    evaluate_record,
    extract_answer,
    format_report_table,
    judge,
    parse_judge,
    semantic_similarity,
    strip_answer_markers,
    tokenize,
)


def _echo_backend(answer: str) -> ScriptedChatBackend:
    return ScriptedChatBackend(default=answer)


def test_strip_answer_markers():
    assert strip_answer_markers("thinking...<answer>macula</answer>") == "macula"
    assert strip_answer_markers("no markers here") == "no markers here"
    assert strip_answer_markers("<answer>a</answer> tail <answer>b</answer>") == "a"


def test_extract_answer_refusal_paths():
    assert extract_answer("q", "", _echo_backend("whatever")) == REFUSAL
    assert extract_answer("q", "   ", _echo_backend("whatever")) == REFUSAL
    assert extract_answer("q", "resp", _echo_backend("Refusal")) == REFUSAL
    assert extract_answer("q", "resp", _echo_backend("'refusal'.")) == REFUSAL
    assert extract_answer("q", "resp", _echo_backend("  ")) == REFUSAL
    assert extract_answer("q", "resp", _echo_backend("macula")) == "macula"


def test_parse_judge_accepts_only_rubric_values():
    for score in RUBRIC_SCORES:
        verdict = parse_judge(json.dumps({"reasoning": "r", "score": score}))
        assert verdict.score == score
    with pytest.raises(MalformedResponseError):
        parse_judge(json.dumps({"score": True}))
    with pytest.raises(MalformedResponseError):
        parse_judge(json.dumps({"score": "1.0"}))


@settings(max_examples=100, deadline=None)
@given(score=st.floats(min_value=-10, max_value=10, allow_nan=False))
def test_parse_judge_rejects_every_off_rubric_score(score):
    content = json.dumps({"reasoning": "r", "score": score})
    if score in RUBRIC_SCORES:
        assert parse_judge(content).score == score
    else:
        with pytest.raises(MalformedResponseError):
            parse_judge(content)


def test_judge_short_circuits_refusal_to_zero():
    record = EvalRecord(question="q", label="macula", extracted_answer=REFUSAL)
    # backend would answer 1.0, but the refusal path must not consult it
    backend = _echo_backend(json.dumps({"score": 1.0}))
    verdict = judge(record, backend)
    assert verdict.score == 0.0
    assert backend.calls == []
    with pytest.raises(ValueError):
        judge(EvalRecord(question="q", label="", extracted_answer="x"), backend)


def test_tokenize_lowercases_and_splits_punctuation():
    assert tokenize("The Fovea, centered!") == ["the", "fovea", "centered"]
    assert tokenize("...") == []


@settings(max_examples=100, deadline=None)
@given(text=st.text(alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd"), max_codepoint=0x017F), min_size=1, max_size=40))
def test_self_similarity_is_exactly_one(text):
    backend = HashedOneHotTokenEmbedder()
    score, degenerate = semantic_similarity(text, text, backend)
    if tokenize(text):
        assert abs(score - 1.0) < 1e-6
        assert not degenerate
    else:
        assert degenerate


def test_similarity_degenerate_on_empty_tokens():
    backend = HashedOneHotTokenEmbedder()
    assert semantic_similarity("", "macula", backend) == (0.0, True)
    assert semantic_similarity("!!!", "macula", backend) == (0.0, True)


def _collision_free_vocab(embedder: HashedOneHotTokenEmbedder, words: list[str]) -> list[str]:
    seen: dict[int, str] = {}
    out = []
    for w in words:
        b = embedder.bucket(w)
        if b not in seen:
            seen[b] = w
            out.append(w)
    return out


def test_subset_token_closed_form_f1():
    """With identity (one-hot) embeddings and pred ⊂ ref: P=1, R=|pred|/|ref|,
    so F1 must equal 2R/(1+R)."""
    backend = HashedOneHotTokenEmbedder()
    vocab = _collision_free_vocab(backend, [f"tok{i}" for i in range(40)])[:12]
    ref = " ".join(vocab)
    for k in range(1, len(vocab)):
        pred = " ".join(vocab[:k])
        score, degenerate = semantic_similarity(pred, ref, backend)
        r = k / len(vocab)
        assert not degenerate
        assert abs(score - 2 * r / (1 + r)) < 1e-9


def test_disjoint_tokens_score_zero():
    backend = HashedOneHotTokenEmbedder()
    vocab = _collision_free_vocab(backend, [f"word{i}" for i in range(30)])[:8]
    score, _ = semantic_similarity(" ".join(vocab[:4]), " ".join(vocab[4:]), backend)
    assert score == pytest.approx(0.0, abs=1e-12)


def test_evaluate_record_end_to_end():
    judge_rules = [
        {"match": ["[LABEL]\nmacula"], "response": json.dumps({"reasoning": "ok", "score": 0.75})},
    ]
    extract_rules = [{"match": ["strict data-extraction"], "response": "macula"}]
    backend = ScriptedChatBackend(rules=extract_rules + judge_rules)
    record = EvalRecord(question="What is at the center?", label="macula", raw_response="<answer>It is the macula.</answer>")
    out = evaluate_record(record, backend, backend, HashedOneHotTokenEmbedder(), strip_markers=True)
    assert out.extracted_answer == "macula"
    assert out.verdict.score == 0.75
    assert out.similarity_f1 == pytest.approx(1.0)


def test_aggregate_report_scaling_and_warnings():
    def rec(score, answer="x", f1=0.5):
        r = EvalRecord(question="q", label="l", extracted_answer=answer)
        r.similarity_f1 = f1
        from vidinstruct.evalharness import JudgeVerdict

        r.verdict = JudgeVerdict(reasoning="", score=score)
        return r

    report = aggregate_report(
        {
            "yes_no": [rec(1.0), rec(0.5), rec(0.0, answer=REFUSAL)],
            "what": [rec(0.75, f1=0.25)],
            "where": [],
        }
    )
    assert report["subtypes"]["yes_no"]["llm_score"] == 50.0
    assert report["subtypes"]["yes_no"]["refusals"] == 1
    assert report["subtypes"]["what"]["similarity_f1"] == 25.0
    assert "where" not in report["subtypes"]
    assert any("where" in w for w in report["warnings"])
    assert report["average"]["llm_score"] == round((0.5 + 0.75) / 2 * 100, 2)
    table = format_report_table(report)
    assert "average" in table and "yes_no" in table
