from __future__ import annotations

import json

import numpy as np
import pytest

from vidinstruct.backends.mocks import (
    HashedOneHotTokenEmbedder,
    HashEmbeddingBackend,
    ScriptedChatBackend,
    TableFrameClassifier,
    TableSimilarityScorer,
    TableTranscriber,
)
from vidinstruct.backends.types import ChatMessage, ChatRequest, FrameClassification, payload_digest
from vidinstruct.errors import MalformedResponseError


def _req(content="hello", temperature=0.0) -> ChatRequest:
    return ChatRequest(system="sys", messages=[ChatMessage("user", content)], temperature=temperature)


def test_chat_request_validation():
    _req().validate()
    with pytest.raises(ValueError):
        ChatRequest(system="s", messages=[ChatMessage("assistant", "x")]).validate()
    with pytest.raises(ValueError):
        ChatRequest(system="s", messages=[ChatMessage("user", "a"), ChatMessage("user", "b")]).validate()
    with pytest.raises(ValueError):
        ChatRequest(system="s", messages=[], max_tokens=0).validate()


def test_chat_request_digest_covers_sampling_params():
    assert _req().digest() == _req().digest()
    assert _req().digest() != _req(content="other").digest()
    assert _req().digest() != _req(temperature=0.2).digest()


def test_generation_defaults():
    req = _req()
    assert req.temperature == 0.0
    assert req.max_tokens == 2048


def test_scripted_chat_lookup_order():
    req = _req("the quick brown fox")
    backend = ScriptedChatBackend(
        rules=[
            {"match": ["quick", "fox"], "response": "rule-hit"},
            {"match": ["quick"], "response": "never-reached"},
        ],
        digest_table={req.digest(): "digest-hit"},
        default="fallback",
    )
    assert backend.chat(req).content == "digest-hit"
    assert backend.chat(_req("a quick fox ran")).content == "rule-hit"
    assert backend.chat(_req("only quick here")).content == "never-reached"
    assert backend.chat(_req("nothing matches")).content == "fallback"
    assert len(backend.calls) == 4
    with pytest.raises(KeyError):
        ScriptedChatBackend().chat(_req())


def test_hash_embeddings_are_deterministic_unit_norm():
    backend = HashEmbeddingBackend(dim=12, seed=1)
    a = backend.embed(b"payload")
    b = backend.embed(b"payload")
    np.testing.assert_array_equal(a, b)
    assert np.linalg.norm(a) == pytest.approx(1.0)
    assert not np.array_equal(a, backend.embed(b"other"))
    assert not np.array_equal(a, HashEmbeddingBackend(dim=12, seed=2).embed(b"payload"))


def test_frame_classifier_table_and_default_validity():
    digest = payload_digest(b"frame")
    table = {digest: {"retinal_probability": 0.7, "modality": "OCT", "modality_confidence": 0.8}}
    cls = TableFrameClassifier(table).classify_frame(b"frame")
    assert (cls.retinal_probability, cls.modality) == (0.7, "OCT")
    fallback = TableFrameClassifier().classify_frame(b"unknown")
    fallback.validate()  # hash default must still be in-range


def test_frame_classification_validation():
    with pytest.raises(MalformedResponseError):
        FrameClassification(1.5, "CFP", 0.5).validate()
    with pytest.raises(MalformedResponseError):
        FrameClassification(0.5, "MRI", 0.5).validate()


def test_similarity_scorer_prompt_rows_and_default():
    digest = payload_digest(b"region")
    scorer = TableSimilarityScorer({digest: {"prompt a": 0.9, "default": -0.2}})
    assert scorer.score_image_text(b"region", ["prompt a", "prompt b"]) == [0.9, -0.2]
    scores = scorer.score_image_text(b"unknown", ["x", "y", "z"])
    assert len(scores) == 3
    assert all(-1.0 <= s <= 1.0 for s in scores)


def test_transcriber_windows_segments():
    digest = payload_digest(b"audio")
    rows = [
        {"start_s": 0.0, "end_s": 2.0, "text": "first"},
        {"start_s": 5.0, "end_s": 8.0, "text": "second"},
    ]
    backend = TableTranscriber({digest: rows})
    segs = backend.transcribe(b"audio", 4.0, 9.0)
    assert [s.text for s in segs] == ["second"]
    assert backend.transcribe(b"audio", 0.0, 10.0)[0].text == "first"


def test_token_embedder_is_stable_and_one_hot():
    backend = HashedOneHotTokenEmbedder(dim=64)
    emb = backend.embed_tokens(["alpha", "beta", "alpha"])
    assert emb.shape == (3, 64)
    np.testing.assert_array_equal(emb[0], emb[2])
    assert emb.sum() == 3.0  # strict one-hot rows


def test_mock_responses_are_pure_functions_of_request():
    """Same request (including on retry) must yield identical responses."""
    backend = ScriptedChatBackend(rules=[{"match": ["x"], "response": json.dumps({"k": 1})}])
    req = _req("x marks the spot")
    assert backend.chat(req).content == backend.chat(req).content
    assert backend.calls[0] == backend.calls[1]
