"""vidinstruct: staged curation of instruction data from clinical video.

The package turns raw video-derived material (metadata, frame embeddings,
sampled frames, transcripts) into quality-gated multimodal instruction
datasets, and ships the matching open-ended evaluation harness. Every
model interaction goes through a pluggable backend so the whole pipeline
runs offline against deterministic mocks.
"""

from .errors import (
    ConfigError,
    MalformedResponseError,
    QuarantineError,
    ResumeRefusedError,
    TransportError,
    VidinstructError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "MalformedResponseError",
    "QuarantineError",
    "ResumeRefusedError",
    "TransportError",
    "VidinstructError",
    "__version__",
]
