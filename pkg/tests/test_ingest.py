from __future__ import annotations

import json

import pytest

from vidinstruct.backends.mocks import ScriptedChatBackend
from vidinstruct.errors import MalformedResponseError
from vidinstruct.ingest import (
    KeywordDictionary,
    VideoMeta,
    build_relevance_request,
    keyword_match,
    llm_relevance,
    parse_relevance,
    prefilter,
)


def _meta(**kw) -> VideoMeta:
    base = dict(video_id="x", title="Retina rounds", duration_s=300.0)
    base.update(kw)
    return VideoMeta.from_dict(base)


def test_prefilter_order_and_reasons():
    assert prefilter(_meta()).keep
    d = prefilter(_meta(duration_s=10.0))
    assert (d.keep, d.reason) == (False, "too_short")
    d = prefilter(_meta(corrupted=True, duration_s=10.0))
    assert d.reason == "corrupted"  # corruption checked before duration


def test_keyword_dictionary_rejects_empty_and_duplicates():
    with pytest.raises(ValueError):
        KeywordDictionary(terms=[])
    with pytest.raises(ValueError):
        KeywordDictionary(terms=["Retina", "retina"])


def test_keyword_match_is_whole_phrase_and_case_insensitive():
    kd = KeywordDictionary(terms=["oct", "fundus photography"])
    assert keyword_match(_meta(title="Intro to OCT imaging"), kd) == ["oct"]
    # "october" must not match the whole word "oct"
    assert keyword_match(_meta(title="October recap"), kd) == []
    assert keyword_match(_meta(title="", description="serial Fundus  Photography review"), kd) == [
        "fundus photography"
    ]
    assert keyword_match(_meta(title="", tags=["fundus photography"]), kd) == ["fundus photography"]


def test_keyword_dictionary_from_file_skips_comments(tmp_path):
    path = tmp_path / "kw.txt"
    path.write_text("# comment\nretina\n\nfundus\n", encoding="utf-8")
    assert KeywordDictionary.from_file(path).terms == ["retina", "fundus"]


def test_parse_relevance_decisions():
    assert parse_relevance('{"reasoning": "ok", "decision": "keep"}').keep
    d = parse_relevance('{"decision": "discard"}')
    assert not d.keep and d.reason == "llm_relevance"
    with pytest.raises(MalformedResponseError):
        parse_relevance('{"decision": "maybe"}')
    with pytest.raises(MalformedResponseError):
        parse_relevance("no json here")


def test_llm_relevance_round_trip():
    meta = _meta(title="Retina grand rounds")
    backend = ScriptedChatBackend(
        rules=[{"match": ["Retina grand rounds"], "response": json.dumps({"decision": "keep"})}]
    )
    assert llm_relevance(meta, ["retina"], backend).keep
    req = build_relevance_request(meta, ["retina"])
    assert "Matched terms: retina" in req.messages[-1].content
    assert len(backend.calls) == 1
