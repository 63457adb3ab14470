"""Line-delimited checkpoint log: completed (item, stage) pairs per run."""

from __future__ import annotations

import json
import threading
from pathlib import Path

from ..errors import ResumeRefusedError


class Checkpoint:
    """Append-only completion log guarded by the config digest.

    Each record is one JSON line: {"item_id", "stage", "artifact"}. The
    first line pins run_id and config digest; resuming with a different
    digest is refused.
    """

    def __init__(self, path: Path, run_id: str, config_digest: str):
        self.path = Path(path)
        self.run_id = run_id
        self.config_digest = config_digest
        self._lock = threading.Lock()
        self.completed: dict[str, dict[str, str]] = {}  # item_id -> stage -> artifact digest
        if self.path.exists():
            self._load()
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._append({"run_id": run_id, "config_digest": config_digest})

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        if not lines:
            raise ResumeRefusedError("checkpoint file is empty")
        head = lines[0]
        if head.get("config_digest") != self.config_digest:
            raise ResumeRefusedError(
                "config digest mismatch: checkpoint was written with "
                f"{head.get('config_digest', '?')[:12]}, current config is {self.config_digest[:12]}"
            )
        for rec in lines[1:]:
            self.completed.setdefault(rec["item_id"], {})[rec["stage"]] = rec["artifact"]

    def _append(self, obj: dict) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
            fh.flush()

    def mark(self, item_id: str, stage: str, artifact: str) -> None:
        with self._lock:
            self.completed.setdefault(item_id, {})[stage] = artifact
            self._append({"item_id": item_id, "stage": stage, "artifact": artifact})

    def artifact_for(self, item_id: str, stage: str) -> str | None:
        return self.completed.get(item_id, {}).get(stage)
