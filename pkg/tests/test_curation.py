from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidinstruct.curation import (
    GateConfig,
    QualityScore,
    SeparatedTranscript,
    build_scoring_request,
    build_separation_request,
    cot_eligible,
    is_verbatim,
    normalize_for_match,
    parse_score,
    parse_separation,
    passes_gate,
)
from vidinstruct.errors import MalformedResponseError, QuarantineError

RAW = "Here you can see  scattered microaneurysms — they're temporal to the fovea. He may progress later."


def test_normalization_rules():
    assert normalize_for_match("a  b\t c\n") == "a b c"
    assert normalize_for_match("it’s “fine”") == "it's \"fine\""
    # case is preserved
    assert normalize_for_match("Fovea") == "Fovea"


def test_is_verbatim_tolerates_whitespace_and_quotes():
    assert is_verbatim("scattered microaneurysms", RAW)
    assert is_verbatim("you can see scattered  microaneurysms", RAW)
    assert is_verbatim("they’re temporal to the fovea", RAW)
    assert not is_verbatim("Scattered Microaneurysms", RAW)  # case-sensitive
    assert not is_verbatim("microaneurysms near the fovea", RAW)  # paraphrase


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_any_true_substring_is_verbatim(data):
    text = data.draw(st.text(min_size=5, max_size=80))
    lo = data.draw(st.integers(min_value=0, max_value=len(text) - 1))
    hi = data.draw(st.integers(min_value=lo + 1, max_value=len(text)))
    fragment = text[lo:hi]
    if normalize_for_match(fragment):
        assert is_verbatim(fragment, text)


def _sep_content(scenes: list[str], context=("background",)) -> str:
    return json.dumps(
        {
            "supplemental_context": list(context),
            "scene_count": len(scenes),
            "scenes": [{"scene_id": i + 1, "verbatim_scene_text": s} for i, s in enumerate(scenes)],
        }
    )


def test_parse_separation_keeps_only_verbatim_scenes_and_renumbers():
    content = _sep_content(["a paraphrased claim", "scattered microaneurysms", "temporal to the fovea"])
    sep = parse_separation(content, RAW)
    assert [s.scene_id for s in sep.scenes] == [1, 2]
    assert sep.scenes[0].verbatim_scene_text == "scattered microaneurysms"
    assert sep.scene_count == 2


def test_parse_separation_quarantines_when_all_scenes_fail():
    with pytest.raises(QuarantineError):
        parse_separation(_sep_content(["fully invented text"]), RAW)


def test_parse_separation_rejects_malformed_shapes():
    with pytest.raises(MalformedResponseError):
        parse_separation(json.dumps({"supplemental_context": [], "scenes": []}), RAW)
    with pytest.raises(MalformedResponseError):
        parse_separation(json.dumps({"scenes": [{"verbatim_scene_text": ""}]}), RAW)
    with pytest.raises(MalformedResponseError):
        parse_separation(
            json.dumps({"supplemental_context": "not a list", "scenes": [{"verbatim_scene_text": "x"}]}), RAW
        )


def test_separation_request_embeds_raw_transcript_after_fewshot():
    req = build_separation_request(RAW)
    assert req.messages[-1].content.endswith(RAW)
    assert len(req.messages) >= 3  # at least one few-shot pair precedes the payload


def test_parse_score_field_mapping_and_ranges():
    score = parse_score(
        json.dumps(
            {"reasoning": "r", "quality": 9, "difficulty": 8, "Relevance2Medicine": 5, "MentionSpecificDetails": True}
        )
    )
    assert (score.quality, score.difficulty, score.relevance2medicine) == (9, 8, 5)
    for bad in (
        {"quality": 11, "difficulty": 5, "Relevance2Medicine": 3, "MentionSpecificDetails": True},
        {"quality": 5, "difficulty": 0, "Relevance2Medicine": 3, "MentionSpecificDetails": True},
        {"quality": 5, "difficulty": 5, "Relevance2Medicine": 7, "MentionSpecificDetails": True},
        {"quality": 5, "difficulty": 5, "Relevance2Medicine": 3, "MentionSpecificDetails": "yes"},
        {"quality": 5, "difficulty": 5, "MentionSpecificDetails": True},
    ):
        with pytest.raises(MalformedResponseError):
            parse_score(json.dumps(bad))


def test_scoring_request_payload_roundtrips():
    sep = SeparatedTranscript.from_dict(
        {"supplemental_context": ["c"], "scenes": [{"scene_id": 1, "verbatim_scene_text": "s"}]}
    )
    req = build_scoring_request(sep)
    payload = json.loads(req.messages[-1].content)
    assert payload["scenes"][0]["verbatim_scene_text"] == "s"


def test_gate_predicates_against_closed_form():
    gate = GateConfig()
    for quality in range(1, 11):
        for difficulty in range(1, 11):
            for relevance in range(1, 7):
                for details in (False, True):
                    score = QualityScore("", quality, difficulty, relevance, details)
                    assert passes_gate(score, gate) == (relevance >= 3 and details)
                    assert cot_eligible(score, gate) == (
                        quality >= 9 and difficulty >= 9 and relevance >= 5 and details
                    )


def test_gate_config_validation():
    with pytest.raises(ValueError):
        GateConfig(min_relevance=7).validate()
    with pytest.raises(ValueError):
        GateConfig(cot_min_quality=0).validate()
