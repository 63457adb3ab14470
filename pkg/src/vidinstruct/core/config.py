"""Run configuration: thresholds, gates, backends, retry policy, seed."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..curation import GateConfig
from ..errors import ConfigError
from ..refiner import DEFAULT_NEGATIVE_PROMPTS, DEFAULT_POSITIVE_PROMPTS, PromptDictionaries
from ..segmenter import SegmenterConfig


@dataclass
class RetryPolicy:
    max_retries: int = 2
    retry_temperature: float = 0.2

    def validate(self) -> None:
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if not 0.0 <= self.retry_temperature <= 1.0:
            raise ConfigError("retry_temperature must be a unit scalar")


@dataclass
class BackendConfig:
    mode: str = "mock"  # "mock" | "http"
    endpoints: dict = field(default_factory=dict)  # stage name -> base URL

    def validate(self) -> None:
        if self.mode not in ("mock", "http"):
            raise ConfigError(f"backend mode must be mock or http, got {self.mode!r}")
        if self.mode == "http" and not self.endpoints:
            raise ConfigError("http backend mode requires endpoints")


@dataclass
class RunConfig:
    seed: int = 0
    parallelism: int = 1
    min_duration_s: float = 60.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    gates: GateConfig = field(default_factory=GateConfig)
    backends: BackendConfig = field(default_factory=BackendConfig)
    tau_pos: float = 0.30
    tau_neg: float = 0.30
    positive_prompts: list[str] = field(default_factory=lambda: list(DEFAULT_POSITIVE_PROMPTS))
    negative_prompts: list[str] = field(default_factory=lambda: list(DEFAULT_NEGATIVE_PROMPTS))
    split_targets: dict = field(default_factory=lambda: {"yes_no": 0, "what": 0, "where": 0})

    def validate(self) -> None:
        if self.parallelism < 1:
            raise ConfigError("parallelism must be a positive integer")
        self.retry.validate()
        self.segmenter.validate()
        self.gates.validate()
        self.backends.validate()
        self.prompt_dictionaries().validate()

    def prompt_dictionaries(self) -> PromptDictionaries:
        return PromptDictionaries(
            positive=list(self.positive_prompts),
            negative=list(self.negative_prompts),
            tau_pos=self.tau_pos,
            tau_neg=self.tau_neg,
        )

    def digest(self) -> str:
        """Digest over everything that affects outputs.

        Parallelism is execution-only and excluded, so resuming with a
        different degree is allowed.
        """
        payload = asdict(self)
        payload.pop("parallelism")
        raw = json.dumps(payload, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    @property
    def run_id(self) -> str:
        return f"run-{self.digest()[:12]}"

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        cfg = cls(
            seed=int(data.get("seed", 0)),
            parallelism=int(data.get("parallelism", 1)),
            min_duration_s=float(data.get("min_duration_s", 60.0)),
            retry=RetryPolicy(**data.get("retry", {})),
            segmenter=SegmenterConfig(**data.get("segmenter", {})),
            gates=GateConfig(**data.get("gates", {})),
            backends=BackendConfig(**data.get("backends", {})),
            tau_pos=float(data.get("tau_pos", 0.30)),
            tau_neg=float(data.get("tau_neg", 0.30)),
            positive_prompts=list(data.get("positive_prompts", DEFAULT_POSITIVE_PROMPTS)),
            negative_prompts=list(data.get("negative_prompts", DEFAULT_NEGATIVE_PROMPTS)),
            split_targets=dict(data.get("split_targets", {"yes_no": 0, "what": 0, "where": 0})),
        )
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(data)

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
