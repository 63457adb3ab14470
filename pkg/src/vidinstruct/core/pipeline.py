"""Stage orchestration: per-item state, checkpoint/resume, quarantine.

One work item per input video. Items advance monotonically through the
stage order; gate rejections mark episodes (and ultimately items) as
discarded with a reason, unrecoverable failures quarantine the item, and
everything else ends Assembled. Stage outputs are committed in item_id
order so reports and manifests are deterministic regardless of
scheduling.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .. import curation, ingest, refiner, segmenter, synthesis, verify
from ..backends import mocks
from ..backends.http import HttpChatBackend, HttpInferenceBackend
from ..backends.types import ChatRequest
from ..dataset import DatasetManifest, SplitSpec, assemble_manifest, split_eval
from ..errors import ConfigError, QuarantineError, TransportError
from .checkpoint import Checkpoint
from .config import RunConfig
from .corpus import Corpus, transcript_text_in_span
from .retry import call_structured
from .store import ArtifactStore

STAGES = (
    "Ingested",
    "Segmented",
    "Refined",
    "Separated",
    "Scored",
    "Synthesized",
    "Verified",
    "Assembled",
)

_STAGE_RANK = {name: i for i, name in enumerate(STAGES)}


@dataclass
class BackendSet:
    chat: object
    cot_chat: object
    classifier: object
    regions: object
    similarity: object
    detector: object
    embed: object = None
    transcriber: object = None

    @classmethod
    def mocks_from_fixtures(cls, fixtures: dict) -> "BackendSet":
        chat = mocks.ScriptedChatBackend(
            rules=fixtures.get("chat_rules", []),
            digest_table=fixtures.get("chat_digests", {}),
            default=fixtures.get("chat_default"),
        )
        return cls(
            chat=chat,
            cot_chat=chat,
            classifier=mocks.TableFrameClassifier(fixtures.get("classifier", {})),
            regions=mocks.TableRegionProposer(fixtures.get("regions", {})),
            similarity=mocks.TableSimilarityScorer(fixtures.get("similarity", {})),
            detector=mocks.TableSensitiveDetector(fixtures.get("detector", {})),
            embed=mocks.HashEmbeddingBackend(),
            transcriber=mocks.TableTranscriber(fixtures.get("transcriber", {})),
        )

    @classmethod
    def from_config(cls, config: RunConfig, corpus: Corpus) -> "BackendSet":
        if config.backends.mode == "mock":
            return cls.mocks_from_fixtures(corpus.mock_fixtures())
        endpoints = config.backends.endpoints
        chat_url = endpoints.get("chat")
        if not chat_url:
            raise ConfigError("http backend mode requires a 'chat' endpoint")
        inference = HttpInferenceBackend(endpoints.get("inference", ""))
        return cls(
            chat=HttpChatBackend(chat_url),
            cot_chat=HttpChatBackend(endpoints.get("cot_chat", chat_url)),
            classifier=inference,
            regions=inference,
            similarity=inference,
            detector=inference,
            embed=inference,
            transcriber=inference,
        )


@dataclass
class RunReport:
    run_id: str
    input_items: int = 0
    assembled: int = 0
    discarded: int = 0
    quarantined: int = 0
    discard_reasons: dict = field(default_factory=dict)
    quarantine_reasons: dict = field(default_factory=dict)
    instance_counts: dict = field(default_factory=dict)
    manifest_path: Optional[str] = None
    aborted: bool = False

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "input_items": self.input_items,
            "assembled": self.assembled,
            "discarded": self.discarded,
            "quarantined": self.quarantined,
            "discard_reasons": self.discard_reasons,
            "quarantine_reasons": self.quarantine_reasons,
            "instance_counts": self.instance_counts,
            "manifest_path": self.manifest_path,
            "aborted": self.aborted,
        }


class _EventLog:
    def __init__(self, path: Path):
        self.path = path
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def emit(self, **fields) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(fields, sort_keys=True) + "\n")


class PipelineRunner:
    def __init__(
        self,
        config: RunConfig,
        corpus: Corpus,
        run_dir: Path,
        backends: Optional[BackendSet] = None,
    ):
        config.validate()
        self.config = config
        self.corpus = corpus
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.backends = backends or BackendSet.from_config(config, corpus)
        self.store = ArtifactStore(self.run_dir / "artifacts")
        self.checkpoint = Checkpoint(self.run_dir / "checkpoint.jsonl", config.run_id, config.digest())
        self.events = _EventLog(self.run_dir / "events.jsonl")
        self.images_dir = self.run_dir / "images"
        self.images_dir.mkdir(exist_ok=True)

    # --- orchestration ----------------------------------------------------

    def run(self, stop_after: Optional[str] = None) -> RunReport:
        if stop_after is not None and stop_after not in STAGES:
            raise ConfigError(f"unknown stage {stop_after!r}")
        videos = self.corpus.videos()
        report = RunReport(run_id=self.config.run_id, input_items=len(videos))
        states: dict[str, dict] = {}

        def process(meta) -> dict:
            return self._advance_item(meta, stop_after)

        try:
            if self.config.parallelism > 1:
                with ThreadPoolExecutor(max_workers=self.config.parallelism) as pool:
                    for meta, state in zip(videos, pool.map(process, videos)):
                        states[meta.video_id] = state
            else:
                for meta in videos:
                    states[meta.video_id] = process(meta)
        except TransportError as exc:
            report.aborted = True
            self.events.emit(event="abort", reason=str(exc))
            self._write_report(report)
            return report

        # terminal accounting and assembly, in item order
        instances = []
        for item_id in sorted(states):
            state = states[item_id]
            status = state["status"]
            if status == "assembled":
                report.assembled += 1
                instances.extend(state["kept_instances"])
            elif status == "discarded":
                report.discarded += 1
                reason = state.get("reason") or "unknown"
                report.discard_reasons[reason] = report.discard_reasons.get(reason, 0) + 1
            elif status == "quarantined":
                report.quarantined += 1
                reason = state.get("reason") or "unknown"
                report.quarantine_reasons[reason] = report.quarantine_reasons.get(reason, 0) + 1
            elif stop_after is not None:
                pass  # partial run: nothing terminal yet for this item
            else:
                raise AssertionError(f"item {item_id} finished in non-terminal state {status!r}")

        if stop_after is None:
            manifest = assemble_manifest(instances, run_id=self.config.run_id)
            if any(v > 0 for v in self.config.split_targets.values()):
                manifest = split_eval(manifest, SplitSpec(targets=dict(self.config.split_targets), seed=self.config.seed))
            manifest_dir = self.run_dir / "manifest"
            manifest.save(manifest_dir)
            report.manifest_path = str(manifest_dir)
            for rec in manifest.instances:
                key = f"{rec['kind']}:{rec.get('subtype') or '-'}"
                report.instance_counts[key] = report.instance_counts.get(key, 0) + 1
        self._write_report(report)
        return report

    def _write_report(self, report: RunReport) -> None:
        (self.run_dir / "run_report.json").write_text(
            json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    # --- per-item stage machine -------------------------------------------

    def _advance_item(self, meta, stop_after: Optional[str]) -> dict:
        item_id = meta.video_id
        state = {"item_id": item_id, "video_id": meta.video_id, "stage": None, "status": "active",
                 "reason": None, "episodes": [], "instances": [], "kept_instances": []}
        # reuse the latest checkpointed stage
        done = self.checkpoint.completed.get(item_id, {})
        resumed_from = None
        for stage in reversed(STAGES):
            if stage in done:
                state = self.store.get(done[stage])
                resumed_from = stage
                break
        stop_rank = _STAGE_RANK[stop_after] if stop_after else _STAGE_RANK["Assembled"]
        start_rank = _STAGE_RANK[resumed_from] + 1 if resumed_from else 0
        for stage in STAGES[start_rank : stop_rank + 1]:
            if state["status"] in ("quarantined",):
                break
            if state["status"] == "discarded" and stage != "Assembled":
                # terminal decision already made; skip remaining work
                self.checkpoint.mark(item_id, stage, self.store.put(state))
                continue
            handler = getattr(self, f"_stage_{stage.lower()}")
            try:
                handler(meta, state)
                state["stage"] = stage
            except QuarantineError as exc:
                state["status"] = "quarantined"
                state["reason"] = exc.reason
            except TransportError:
                raise
            except Exception as exc:  # unexpected per-item failure -> quarantine
                state["status"] = "quarantined"
                state["reason"] = f"{stage.lower()}: {type(exc).__name__}: {exc}"
            digest = self.store.put(state)
            self.checkpoint.mark(item_id, stage, digest)
            self.events.emit(event="stage", item_id=item_id, stage=stage,
                             status=state["status"], reason=state.get("reason"))
            if state["status"] == "quarantined":
                break
        return state

    def _chat(self, build_request, parse, reason_prefix, backend=None):
        backend = backend or self.backends.chat
        return call_structured(
            backend,
            build_request,
            parse,
            max_retries=self.config.retry.max_retries,
            retry_temperature=self.config.retry.retry_temperature,
            reason_prefix=reason_prefix,
        )

    def _stage_ingested(self, meta, state) -> None:
        decision = ingest.prefilter(meta, self.config.min_duration_s)
        if not decision.keep:
            self._discard(state, f"prefilter: {decision.reason}")
            return
        matched = ingest.keyword_match(meta, self.corpus.keyword_dictionary())
        if not matched:
            self._discard(state, "keyword: no_match")
            return

        def build(temp):
            req = ingest.build_relevance_request(meta, matched)
            if temp is not None:
                req.temperature = temp
            return req

        decision = self._chat(build, ingest.parse_relevance, "relevance")
        if not decision.keep:
            self._discard(state, "llm_relevance")

    def _stage_segmented(self, meta, state) -> None:
        emb_path = self.corpus.embeddings_path(meta.video_id)
        if not emb_path.exists():
            raise QuarantineError("segment: embeddings missing")
        embeddings, timestamps = segmenter.read_embeddings(emb_path)
        frames = [
            segmenter.FrameSample(frame_index=i, timestamp_s=t, embedding=embeddings[i])
            for i, t in enumerate(timestamps)
        ]
        episodes = segmenter.segment_episodes(frames, self.config.segmenter)
        if not episodes:
            self._discard(state, "segment: no_episode")
            return
        kept = []
        for ep in episodes:
            pairs = []
            for idx in ep.frame_indices:
                frame_file = self.corpus.frame_path(meta.video_id, idx)
                if not frame_file.exists():
                    raise QuarantineError(f"segment: frame {idx} missing")
                pairs.append((frames[idx], frame_file.read_bytes()))
            sample, cls = segmenter.select_keyframe(pairs, self.backends.classifier)
            if cls.retinal_probability < self.config.segmenter.keyframe_min_prob:
                state.setdefault("episode_log", []).append(
                    {"episode_id": ep.episode_id, "reason": "keyframe: low_probability"}
                )
                continue
            span = segmenter.transcript_span(
                frames[ep.frame_indices[0]].timestamp_s,
                frames[ep.frame_indices[-1]].timestamp_s,
                self.config.segmenter,
                meta.duration_s,
            )
            kept.append(
                {
                    "episode_id": ep.episode_id,
                    "frame_indices": ep.frame_indices,
                    "keyframe_index": sample.frame_index,
                    "modality": cls.modality,
                    "keyframe_prob": cls.retinal_probability,
                    "span": [span.start_s, span.end_s],
                    "status": "active",
                    "reason": None,
                    "stage_reached": "Segmented",
                }
            )
        state["episodes"] = kept
        if not kept:
            self._discard(state, "keyframe: low_probability")

    def _stage_refined(self, meta, state) -> None:
        dicts = self.config.prompt_dictionaries()
        for ep in self._active_episodes(state):
            frame_file = self.corpus.frame_path(meta.video_id, ep["keyframe_index"])
            payload = frame_file.read_bytes()
            image = np.asarray(Image.open(frame_file).convert("RGB"))
            decisions = refiner.filter_regions(image, self.backends.regions, self.backends.similarity, dicts, payload)
            kept_boxes = [d.box for d in decisions if d.kept]
            if not kept_boxes:
                self._discard_episode(ep, "no_clinical_region", "Refined")
                continue
            composed, layout = refiner.compose_refined_image(image, kept_boxes)
            image_id = f"{meta.video_id}-{ep['episode_id']}"
            out_path = self.images_dir / f"{image_id}.png"
            Image.fromarray(composed).save(out_path)
            deidentified = refiner.deidentify(
                np.asarray(Image.open(out_path).convert("RGB")),
                self.backends.detector,
                out_path.read_bytes(),
            )
            Image.fromarray(deidentified).save(out_path)
            (self.images_dir / f"{image_id}.layout.json").write_text(
                json.dumps({"canvas_w": layout.canvas_w, "canvas_h": layout.canvas_h,
                            "original_boxes": layout.original_boxes}, sort_keys=True) + "\n",
                encoding="utf-8",
            )
            ep["image_id"] = image_id
            ep["image_path"] = f"images/{image_id}.png"
            ep["stage_reached"] = "Refined"
        self._require_alive(state, "Refined")

    def _stage_separated(self, meta, state) -> None:
        segments = self.corpus.transcript(meta.video_id)
        for ep in self._active_episodes(state):
            raw = transcript_text_in_span(segments, ep["span"][0], ep["span"][1])
            if not raw.strip():
                self._discard_episode(ep, "no_transcript", "Separated")
                continue

            def build(temp, raw=raw):
                req = curation.build_separation_request(raw)
                if temp is not None:
                    req.temperature = temp
                return req

            sep = self._chat(build, lambda c, raw=raw: curation.parse_separation(c, raw), "separation")
            sep.image_ref = ep["image_path"]
            sep.modality = ep["modality"]
            ep["sep"] = sep.to_dict()
            ep["raw_transcript"] = raw
            ep["stage_reached"] = "Separated"
        self._require_alive(state, "Separated")

    def _stage_scored(self, meta, state) -> None:
        for ep in self._active_episodes(state):
            sep = curation.SeparatedTranscript.from_dict(ep["sep"])

            def build(temp, sep=sep):
                req = curation.build_scoring_request(sep)
                if temp is not None:
                    req.temperature = temp
                return req

            score = self._chat(build, curation.parse_score, "scoring")
            ep["score"] = {
                "quality": score.quality,
                "difficulty": score.difficulty,
                "relevance2medicine": score.relevance2medicine,
                "mention_specific_details": score.mention_specific_details,
                "reasoning": score.reasoning,
            }
            if not curation.passes_gate(score, self.config.gates):
                if score.relevance2medicine < self.config.gates.min_relevance:
                    self._discard_episode(ep, "gate: relevance", "Scored")
                else:
                    self._discard_episode(ep, "gate: details", "Scored")
                continue
            ep["cot_eligible"] = curation.cot_eligible(score, self.config.gates)
            ep["stage_reached"] = "Scored"
        self._require_alive(state, "Scored")

    def _stage_synthesized(self, meta, state) -> None:
        instances = []
        for ep in self._active_episodes(state):
            sep = curation.SeparatedTranscript.from_dict(ep["sep"])
            provenance = {
                "video_id": meta.video_id,
                "episode_id": ep["episode_id"],
                "run_id": self.config.run_id,
            }
            base = {
                "image_id": ep["image_id"],
                "image_path": ep["image_path"],
                "modality": ep["modality"],
                "provenance": provenance,
            }
            for target_type in synthesis.QUESTION_TYPES:

                def build(temp, sep=sep, target_type=target_type):
                    req = synthesis.build_vqa_request(sep, target_type)
                    if temp is not None:
                        req.temperature = temp
                    return req

                instance = self._chat(
                    build,
                    lambda c, sep=sep, t=target_type: synthesis.parse_vqa(c, sep, t),
                    f"vqa:{target_type}",
                )
                if instance is None:
                    state.setdefault("na_log", []).append({"episode_id": ep["episode_id"], "type": target_type})
                    continue
                instances.append(
                    {
                        **base,
                        "instance_id": f"{meta.video_id}-{ep['episode_id']}-vqa-{target_type}",
                        "kind": "vqa",
                        "subtype": target_type,
                        "question": instance.question,
                        "answer": instance.answer,
                        "generator_reasoning": instance.generator_reasoning,
                    }
                )

            def build_conv(temp, sep=sep):
                req = synthesis.build_conversation_request(sep)
                if temp is not None:
                    req.temperature = temp
                return req

            conv = self._chat(build_conv, lambda c, sep=sep: synthesis.parse_conversation(c, sep), "conversation")
            instances.append(
                {
                    **base,
                    "instance_id": f"{meta.video_id}-{ep['episode_id']}-conversation",
                    "kind": "conversation",
                    "subtype": None,
                    "turns": conv.turns,
                }
            )
            if ep.get("cot_eligible"):

                def build_cot(temp, sep=sep):
                    req = synthesis.build_cot_request(sep)
                    if temp is not None:
                        req.temperature = temp
                    return req

                cot = self._chat(
                    build_cot,
                    lambda c, sep=sep: synthesis.parse_cot(c, sep),
                    "cot",
                    backend=self.backends.cot_chat,
                )
                instances.append(
                    {
                        **base,
                        "instance_id": f"{meta.video_id}-{ep['episode_id']}-cot",
                        "kind": "cot",
                        "subtype": None,
                        "user_text": cot.user_text,
                        "assistant_text": cot.assistant_text,
                        "temperature": cot.temperature,
                    }
                )
            ep["stage_reached"] = "Synthesized"
        state["instances"] = instances
        if not instances and state["status"] == "active":
            self._discard(state, self._dominant_episode_reason(state) or "synthesis: no_instances")

    def _stage_verified(self, meta, state) -> None:
        if state["status"] != "active":
            return
        sep_by_episode = {ep["episode_id"]: ep["sep"] for ep in state["episodes"] if ep.get("sep")}
        kept = []
        for rec in state["instances"]:
            sep = curation.SeparatedTranscript.from_dict(sep_by_episode[rec["provenance"]["episode_id"]])

            def build(temp, rec=rec, sep=sep):
                req = verify.build_verification_request(rec, sep)
                if temp is not None:
                    req.temperature = temp
                return req

            backend = self.backends.cot_chat if rec["kind"] == "cot" else self.backends.chat
            decision = self._chat(
                build,
                lambda c, rec=rec: verify.parse_verification(c, rec["instance_id"], rec["kind"]),
                f"verify:{rec['kind']}",
                backend=backend,
            )
            if decision.answer == "keep":
                kept.append(rec)
            else:
                state.setdefault("discard_log", []).append(
                    {"instance_id": rec["instance_id"], "reason": decision.reasoning}
                )
        state["kept_instances"] = kept
        if not kept:
            self._discard(state, "verify: all_instances_discarded")

    def _stage_assembled(self, meta, state) -> None:
        if state["status"] != "active":
            return
        state["status"] = "assembled"

    # --- helpers ----------------------------------------------------------

    @staticmethod
    def _active_episodes(state) -> list[dict]:
        return [ep for ep in state["episodes"] if ep["status"] == "active"]

    def _discard(self, state, reason: str) -> None:
        state["status"] = "discarded"
        state["reason"] = reason

    @staticmethod
    def _discard_episode(ep, reason: str, stage: str) -> None:
        ep["status"] = "discarded"
        ep["reason"] = reason
        ep["stage_reached"] = stage

    def _require_alive(self, state, stage: str) -> None:
        if state["status"] == "active" and not self._active_episodes(state):
            self._discard(state, self._dominant_episode_reason(state) or f"{stage.lower()}: no_episode")

    @staticmethod
    def _dominant_episode_reason(state) -> Optional[str]:
        """Reason of the episode that advanced furthest (first on ties)."""
        best = None
        best_rank = -1
        for ep in state["episodes"]:
            if ep["status"] != "discarded":
                continue
            rank = _STAGE_RANK.get(ep.get("stage_reached", "Segmented"), 0)
            if rank > best_rank:
                best_rank = rank
                best = ep["reason"]
        return best


def run_pipeline(
    config: RunConfig,
    corpus_dir: Path,
    run_dir: Path,
    backends: Optional[BackendSet] = None,
    stop_after: Optional[str] = None,
) -> RunReport:
    runner = PipelineRunner(config, Corpus(corpus_dir), run_dir, backends=backends)
    return runner.run(stop_after=stop_after)


def resume(
    config: RunConfig,
    corpus_dir: Path,
    run_dir: Path,
    backends: Optional[BackendSet] = None,
) -> RunReport:
    """Continue a checkpointed run; refuses on config digest mismatch."""
    run_dir = Path(run_dir)
    if not (run_dir / "checkpoint.jsonl").exists():
        raise ConfigError(f"no checkpoint in {run_dir}")
    return run_pipeline(config, corpus_dir, run_dir, backends=backends)
