"""Content-addressed artifact storage under a run directory.

Artifacts are JSON blobs keyed by the digest of their canonical
serialization, which lets resume verify prior work without re-reading
payloads.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


class ArtifactStore:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, obj: dict) -> str:
        raw = json.dumps(obj, sort_keys=True, ensure_ascii=False).encode("utf-8")
        digest = hashlib.sha256(raw).hexdigest()
        path = self.root / f"{digest}.json"
        if not path.exists():
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(raw)
            tmp.rename(path)
        return digest

    def get(self, digest: str) -> dict:
        return json.loads((self.root / f"{digest}.json").read_bytes())

    def has(self, digest: str) -> bool:
        return (self.root / f"{digest}.json").exists()
