"""Ingest-source layout: metadata, embeddings, frames, transcripts, mocks.

A corpus directory contains:

* ``videos.jsonl``            one metadata row per video
* ``keywords.txt``            optional keyword dictionary (term per line)
* ``embeddings/<id>.bin``     precomputed frame embeddings + timestamps
* ``frames/<id>/f<k>.png``    sampled frame images
* ``transcripts/<id>.json``   timed transcript segments
* ``mock_fixtures.json``      optional scripted mock tables for --mock runs
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from ..backends.types import TranscriptSegment
from ..errors import ConfigError
from ..ingest import KeywordDictionary, VideoMeta


class Corpus:
    def __init__(self, root: Path):
        self.root = Path(root)
        if not (self.root / "videos.jsonl").exists():
            raise ConfigError(f"{self.root} is not a corpus directory (videos.jsonl missing)")

    def videos(self) -> list[VideoMeta]:
        rows = []
        with open(self.root / "videos.jsonl", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rows.append(VideoMeta.from_dict(json.loads(line)))
        return sorted(rows, key=lambda v: v.video_id)

    def keyword_dictionary(self) -> KeywordDictionary:
        local = self.root / "keywords.txt"
        if local.exists():
            return KeywordDictionary.from_file(local)
        default = resources.files("vidinstruct").joinpath("data/default_keywords.txt")
        terms = [line.strip() for line in default.read_text(encoding="utf-8").splitlines()]
        return KeywordDictionary(terms=[t for t in terms if t and not t.startswith("#")])

    def embeddings_path(self, video_id: str) -> Path:
        return self.root / "embeddings" / f"{video_id}.bin"

    def frame_path(self, video_id: str, frame_index: int) -> Path:
        return self.root / "frames" / video_id / f"f{frame_index:04d}.png"

    def transcript(self, video_id: str) -> list[TranscriptSegment]:
        path = self.root / "transcripts" / f"{video_id}.json"
        if not path.exists():
            return []
        rows = json.loads(path.read_text(encoding="utf-8"))
        return [TranscriptSegment(float(r["start_s"]), float(r["end_s"]), str(r["text"])) for r in rows]

    def mock_fixtures(self) -> dict:
        path = self.root / "mock_fixtures.json"
        if path.exists():
            return json.loads(path.read_text(encoding="utf-8"))
        return {}


def transcript_text_in_span(segments: list[TranscriptSegment], start_s: float, end_s: float) -> str:
    """Concatenate transcript segments overlapping [start_s, end_s]."""
    parts = [seg.text for seg in segments if seg.end_s >= start_s and seg.start_s <= end_s]
    return " ".join(p.strip() for p in parts if p.strip())
