from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import pytest

from vidinstruct.backends.types import ChatResponse
from vidinstruct.core.config import RunConfig
from vidinstruct.core.corpus import Corpus
from vidinstruct.core.pipeline import STAGES, BackendSet, run_pipeline
from vidinstruct.curation import is_verbatim
from vidinstruct.dataset import DatasetManifest
from vidinstruct.errors import ResumeRefusedError, TransportError
from vidinstruct.synthcorpus import EXPECTED, _SCORING_KEY, _SEPARATION_KEY


class RecordingChat:
    def __init__(self, inner):
        self.inner = inner
        self.texts: list[str] = []

    def chat(self, req):
        self.texts.append(req.text())
        return self.inner.chat(req)


def _recorded_backends(corpus_dir) -> tuple[BackendSet, RecordingChat]:
    backends = BackendSet.mocks_from_fixtures(Corpus(corpus_dir).mock_fixtures())
    recorder = RecordingChat(backends.chat)
    backends.chat = recorder
    backends.cot_chat = recorder
    return backends, recorder


def test_report_matches_expected_accounting(completed_run):
    _, report = completed_run
    assert report.input_items == EXPECTED["input_items"]
    assert report.assembled == EXPECTED["assembled"]
    assert report.discarded == EXPECTED["discarded"]
    assert report.quarantined == EXPECTED["quarantined"]
    assert report.discard_reasons == EXPECTED["discard_reasons"]
    # conservation: every input item ends in exactly one terminal state
    assert report.assembled + report.discarded + report.quarantined == report.input_items
    assert sum(report.instance_counts.values()) == EXPECTED["instances"]
    assert not report.aborted


def test_quarantine_reasons_are_informative(completed_run):
    _, report = completed_run
    reasons = sorted(report.quarantine_reasons)
    assert any(r.startswith("scoring: exhausted retries") for r in reasons)
    assert any("verbatim-substring" in r for r in reasons)


def test_manifest_invariants(completed_run, corpus_dir):
    run_dir, report = completed_run
    manifest = DatasetManifest.load(Path(report.manifest_path))
    assert len(manifest.instances) == EXPECTED["instances"]
    corpus = Corpus(corpus_dir)
    store_root = run_dir / "artifacts"

    for rec in manifest.instances:
        assert rec["split"] in ("train", "test")
        if rec["kind"] == "vqa" and rec["subtype"] == "yes_no":
            assert rec["answer"] in ("Yes.", "No.")
        if rec["kind"] == "conversation":
            roles = [t["from"] for t in rec["turns"]]
            assert roles[::2] == ["user"] * (len(roles) // 2)
            assert roles[1::2] == ["assistant"] * (len(roles) // 2)
            assert len(rec["turns"]) in (6, 8)
        if rec["kind"] == "cot":
            assert rec["temperature"] == pytest.approx(0.4)
        # the refined image exists for every assembled instance
        assert (run_dir / rec["image_path"]).exists()
    assert store_root.exists()


def test_verbatim_invariant_holds_for_all_assembled_scenes(completed_run):
    run_dir, report = completed_run
    # walk final item states via the checkpoint artifacts
    from vidinstruct.core.checkpoint import Checkpoint
    from vidinstruct.core.store import ArtifactStore

    head = json.loads((run_dir / "checkpoint.jsonl").read_text().splitlines()[0])
    cp = Checkpoint(run_dir / "checkpoint.jsonl", head["run_id"], head["config_digest"])
    store = ArtifactStore(run_dir / "artifacts")
    checked = 0
    for item_id, stages in cp.completed.items():
        if "Assembled" not in stages:
            continue
        state = store.get(stages["Assembled"])
        if state["status"] != "assembled":
            continue
        for ep in state["episodes"]:
            if not ep.get("sep"):
                continue
            for scene in ep["sep"]["scenes"]:
                assert is_verbatim(scene["verbatim_scene_text"], ep["raw_transcript"])
                checked += 1
    assert checked >= EXPECTED["assembled"]


def test_split_labels_singleton_images_only(completed_run):
    _, report = completed_run
    manifest = DatasetManifest.load(Path(report.manifest_path))
    test_recs = [r for r in manifest.instances if r["split"] == "test"]
    assert sorted(r["subtype"] for r in test_recs) == ["what", "where", "yes_no"]
    test_images = {r["image_id"] for r in test_recs}
    train_images = {r["image_id"] for r in manifest.instances if r["split"] == "train"}
    assert not test_images & train_images


def test_verification_discard_removes_only_target_instance(completed_run):
    _, report = completed_run
    manifest = DatasetManifest.load(Path(report.manifest_path))
    v14 = [r for r in manifest.instances if r["provenance"]["video_id"] == "v14"]
    assert sorted(r["kind"] for r in v14) == ["vqa", "vqa", "vqa"]  # conversation discarded
    v15 = [r for r in manifest.instances if r["provenance"]["video_id"] == "v15"]
    assert v15 == []


def test_escape_hatch_drops_only_that_type(completed_run):
    _, report = completed_run
    manifest = DatasetManifest.load(Path(report.manifest_path))
    v10 = [r for r in manifest.instances if r["provenance"]["video_id"] == "v10"]
    kinds = sorted((r["kind"], r.get("subtype")) for r in v10)
    assert kinds == [("conversation", None), ("vqa", "what"), ("vqa", "yes_no")]


def test_cot_only_for_boundary_eligible_video(completed_run):
    _, report = completed_run
    manifest = DatasetManifest.load(Path(report.manifest_path))
    cot_videos = sorted({r["provenance"]["video_id"] for r in manifest.instances if r["kind"] == "cot"})
    assert cot_videos == ["v02"]  # (9,9,5,true) passes; (10,8,6,true) does not


def test_multi_episode_video_contributes_per_episode(completed_run):
    _, report = completed_run
    manifest = DatasetManifest.load(Path(report.manifest_path))
    v19 = [r for r in manifest.instances if r["provenance"]["video_id"] == "v19"]
    assert len(v19) == 8
    assert len({r["image_id"] for r in v19}) == 2


def test_malformed_scoring_consumes_full_retry_budget(corpus_dir, tmp_path):
    config = RunConfig(seed=3)
    backends, recorder = _recorded_backends(corpus_dir)
    run_pipeline(config, corpus_dir, tmp_path / "run", backends=backends)
    scoring_attempts = [t for t in recorder.texts if _SCORING_KEY in t and "MKV11" in t]
    assert len(scoring_attempts) == 3  # initial + 2 retries, then quarantine


def test_manifests_are_byte_identical_across_runs(corpus_dir, run_config, tmp_path):
    reports = []
    for name in ("a", "b"):
        reports.append(run_pipeline(run_config, corpus_dir, tmp_path / name))
    m1 = (Path(reports[0].manifest_path) / "manifest.jsonl").read_bytes()
    m2 = (Path(reports[1].manifest_path) / "manifest.jsonl").read_bytes()
    assert m1 == m2
    assert reports[0].run_id == reports[1].run_id


def test_parallelism_does_not_change_outputs(corpus_dir, run_config, completed_run, tmp_path):
    _, baseline = completed_run
    parallel_cfg = dataclasses.replace(run_config, parallelism=4)
    assert parallel_cfg.digest() == run_config.digest()
    report = run_pipeline(parallel_cfg, corpus_dir, tmp_path / "par")
    m1 = (Path(baseline.manifest_path) / "manifest.jsonl").read_bytes()
    m2 = (Path(report.manifest_path) / "manifest.jsonl").read_bytes()
    assert m1 == m2


def test_stop_after_produces_no_manifest(corpus_dir, tmp_path):
    report = run_pipeline(RunConfig(seed=1), corpus_dir, tmp_path / "partial", stop_after="Ingested")
    assert report.manifest_path is None
    assert report.assembled == 0
    # ingest-stage rejections are already terminal
    assert report.discard_reasons["prefilter: too_short"] == 1


def test_resume_skips_completed_stages(corpus_dir, tmp_path):
    config = RunConfig(seed=11)
    run_dir = tmp_path / "run"
    run_pipeline(config, corpus_dir, run_dir, stop_after="Scored")
    backends, recorder = _recorded_backends(corpus_dir)
    report = run_pipeline(config, corpus_dir, run_dir, backends=backends)
    assert report.assembled == EXPECTED["assembled"]
    # stages completed before the stop point are never re-invoked
    assert not any(_SEPARATION_KEY in t for t in recorder.texts)
    assert not any(_SCORING_KEY in t for t in recorder.texts)


def test_rerun_of_finished_run_is_a_no_op(corpus_dir, tmp_path):
    config = RunConfig(seed=12)
    run_dir = tmp_path / "run"
    first = run_pipeline(config, corpus_dir, run_dir)
    backends, recorder = _recorded_backends(corpus_dir)
    second = run_pipeline(config, corpus_dir, run_dir, backends=backends)
    assert recorder.texts == []
    assert second.to_json() == first.to_json()


def test_resume_with_altered_config_is_refused(corpus_dir, tmp_path):
    run_dir = tmp_path / "run"
    run_pipeline(RunConfig(seed=1), corpus_dir, run_dir, stop_after="Ingested")
    with pytest.raises(ResumeRefusedError):
        run_pipeline(RunConfig(seed=2), corpus_dir, run_dir)


def test_transport_error_aborts_then_resume_completes(corpus_dir, tmp_path):
    config = RunConfig(seed=21)
    run_dir = tmp_path / "run"

    class FlakyChat:
        def __init__(self, inner):
            self.inner = inner

        def chat(self, req):
            if _SEPARATION_KEY in req.text():
                raise TransportError("backend unreachable")
            return self.inner.chat(req)

    backends = BackendSet.mocks_from_fixtures(Corpus(corpus_dir).mock_fixtures())
    flaky = FlakyChat(backends.chat)
    broken = dataclasses.replace(backends, chat=flaky, cot_chat=flaky)
    report = run_pipeline(config, corpus_dir, run_dir, backends=broken)
    assert report.aborted
    assert (run_dir / "checkpoint.jsonl").exists()

    healthy = BackendSet.mocks_from_fixtures(Corpus(corpus_dir).mock_fixtures())
    resumed = run_pipeline(config, corpus_dir, run_dir, backends=healthy)
    assert not resumed.aborted
    assert resumed.assembled == EXPECTED["assembled"]


def test_stage_order_is_fixed():
    assert STAGES == (
        "Ingested",
        "Segmented",
        "Refined",
        "Separated",
        "Scored",
        "Synthesized",
        "Verified",
        "Assembled",
    )
