from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidinstruct.backends.mocks import TableFrameClassifier
from vidinstruct.backends.types import payload_digest
from vidinstruct.segmenter import (
    FrameSample,
    SegmenterConfig,
    cosine_similarity,
    read_embeddings,
    segment_boundaries,
    segment_episodes,
    select_keyframe,
    transcript_span,
    write_embeddings,
)


def oracle_boundaries(embeddings: np.ndarray, delta_c: float) -> list[int]:
    """Reference: scan every consecutive pair with scalar cosine."""
    out = []
    for i in range(len(embeddings) - 1):
        a, b = embeddings[i], embeddings[i + 1]
        sim = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
        if sim < delta_c:
            out.append(i)
    return out


def _random_embeddings(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    emb = rng.standard_normal((n, dim))
    # occasional near-duplicate runs so both branch outcomes occur
    for i in range(1, n):
        if rng.random() < 0.5:
            emb[i] = emb[i - 1] + rng.standard_normal(dim) * 1e-4
    return emb


def test_cosine_similarity_basics():
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == pytest.approx(1.0)
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        cosine_similarity(np.zeros(3), np.ones(3))
    with pytest.raises(ValueError):
        cosine_similarity(np.ones(3), np.ones(4))


def test_boundary_threshold_is_strict():
    # exactly at the threshold: sim == delta_c is NOT a boundary
    theta = math.acos(0.95)
    a = np.array([1.0, 0.0])
    b = np.array([math.cos(theta), math.sin(theta)])
    emb = np.stack([a, b])
    sim = cosine_similarity(a, b)
    expected = [0] if sim < 0.95 else []
    assert segment_boundaries(emb, 0.95) == expected
    assert segment_boundaries(np.stack([a, a]), 0.95) == []


def test_short_episodes_are_dropped_and_ids_are_stable():
    e = np.eye(4)
    frames = [
        FrameSample(i, float(i), v)
        for i, v in enumerate([e[0], e[0], e[1], e[2], e[2], e[2]])
    ]
    episodes = segment_episodes(frames, SegmenterConfig())
    # segments: [0,1], [2] (dropped, single frame), [3,4,5]
    assert [ep.episode_id for ep in episodes] == ["ep000", "ep002"]
    assert episodes[0].frame_indices == [0, 1]
    assert episodes[1].frame_indices == [3, 4, 5]


def test_keyframe_argmax_and_earliest_tiebreak():
    frames = [(FrameSample(i, float(i), np.ones(2)), bytes([i])) for i in range(4)]
    table = {
        payload_digest(bytes([0])): {"retinal_probability": 0.4, "modality": "CFP", "modality_confidence": 0.9},
        payload_digest(bytes([1])): {"retinal_probability": 0.8, "modality": "CFP", "modality_confidence": 0.9},
        payload_digest(bytes([2])): {"retinal_probability": 0.8, "modality": "CFP", "modality_confidence": 0.9},
        payload_digest(bytes([3])): {"retinal_probability": 0.1, "modality": "CFP", "modality_confidence": 0.9},
    }
    sample, cls = select_keyframe(frames, TableFrameClassifier(table))
    assert sample.frame_index == 1  # strict argmax keeps the earlier of the tie
    assert cls.retinal_probability == pytest.approx(0.8)
    with pytest.raises(ValueError):
        select_keyframe([], TableFrameClassifier())


def test_transcript_span_pads_and_clamps():
    cfg = SegmenterConfig(delta_t_s=3.0)
    span = transcript_span(1.0, 10.0, cfg, video_duration_s=11.5)
    assert span.start_s == pytest.approx(0.0)
    assert span.end_s == pytest.approx(11.5)
    span = transcript_span(5.0, 6.0, cfg, video_duration_s=100.0)
    assert (span.start_s, span.end_s) == (2.0, 9.0)


def test_embeddings_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    emb = rng.standard_normal((7, 5)).astype(np.float32)
    ts = [0.0, 1.0, 2.0, 3.5, 4.0, 5.0, 6.25]
    path = tmp_path / "e.bin"
    write_embeddings(path, emb, ts)
    back, ts_back = read_embeddings(path)
    assert ts_back == ts
    np.testing.assert_allclose(back, emb.astype(np.float64), rtol=0, atol=0)


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(min_value=2, max_value=40),
    dim=st.integers(min_value=2, max_value=12),
    seed=st.integers(min_value=0, max_value=2**31),
    delta=st.floats(min_value=0.3, max_value=1.0, exclude_min=True),
)
def test_boundaries_match_oracle_property(n, dim, seed, delta):
    rng = np.random.default_rng(seed)
    emb = _random_embeddings(rng, n, dim)
    assert segment_boundaries(emb, delta) == oracle_boundaries(emb, delta)


def test_episode_partition_covers_all_frames():
    rng = np.random.default_rng(11)
    emb = _random_embeddings(rng, 50, 6)
    frames = [FrameSample(i, float(i), emb[i]) for i in range(len(emb))]
    episodes = segment_episodes(frames, SegmenterConfig(min_episode_frames=1))
    covered = [idx for ep in episodes for idx in ep.frame_indices]
    assert covered == list(range(len(emb)))
