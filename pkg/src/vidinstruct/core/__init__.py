from .checkpoint import Checkpoint
from .config import BackendConfig, RetryPolicy, RunConfig
from .corpus import Corpus, transcript_text_in_span
from .pipeline import STAGES, BackendSet, PipelineRunner, RunReport, resume, run_pipeline
from .retry import call_structured
from .store import ArtifactStore

__all__ = [
    "ArtifactStore",
    "BackendConfig",
    "BackendSet",
    "Checkpoint",
    "Corpus",
    "PipelineRunner",
    "RetryPolicy",
    "RunConfig",
    "RunReport",
    "STAGES",
    "call_structured",
    "resume",
    "run_pipeline",
    "transcript_text_in_span",
]
