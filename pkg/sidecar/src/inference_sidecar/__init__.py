"""Inference sidecar: a thin HTTP service in front of vision/audio models.

The service exposes seven JSON endpoints (embed, classify_frame,
transcribe, regions, clip_score, detect, healthz) whose wire formats are
pinned by the shared fixture file ``schemas/endpoint_fixtures.json``.
Model adapters are pluggable; the shipped stubs are deterministic
hash-based implementations suitable for integration testing without
weights.
"""

from .app import create_app

__version__ = "0.1.0"

__all__ = ["create_app", "__version__"]
