from __future__ import annotations

from pathlib import Path

import pytest

from vidinstruct.core.config import RunConfig
from vidinstruct.core.pipeline import run_pipeline
from vidinstruct.synthcorpus import build_corpus


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory) -> Path:
    return build_corpus(tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="session")
def run_config() -> RunConfig:
    return RunConfig(seed=7, split_targets={"yes_no": 1, "what": 1, "where": 1})


@pytest.fixture(scope="session")
def completed_run(corpus_dir, run_config, tmp_path_factory):
    """One full mock pipeline run shared by read-only tests."""
    run_dir = tmp_path_factory.mktemp("run")
    report = run_pipeline(run_config, corpus_dir, run_dir)
    return run_dir, report
