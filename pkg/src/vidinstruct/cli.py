"""Command-line entry points for corpus generation, pipeline runs, dataset
management, and evaluation.

Exit codes: 0 on success, 1 on an operational error (bad inputs, refused
resume, missing files), 2 on usage errors. Progress and errors are emitted
as JSON lines on stderr so runs can be tailed and parsed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import evalharness, synthcorpus, verify
from .backends.mocks import HashedOneHotTokenEmbedder, ScriptedChatBackend
from .core.config import RunConfig
from .core.pipeline import STAGES, resume, run_pipeline
from .dataset import (
    DatasetManifest,
    SplitSpec,
    compute_stats,
    export_sft,
    format_stats_table,
    split_eval,
    verify_counts_table,
)
from .errors import VidinstructError


def _log(**fields) -> None:
    sys.stderr.write(json.dumps(fields, sort_keys=True) + "\n")


def _load_config(args) -> RunConfig:
    if args.config:
        config = RunConfig.from_file(Path(args.config))
    else:
        config = RunConfig()
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "parallelism", None) is not None:
        config.parallelism = args.parallelism
    config.validate()
    return config


def _report_summary(report) -> None:
    _log(
        event="done",
        run_id=report.run_id,
        input_items=report.input_items,
        assembled=report.assembled,
        discarded=report.discarded,
        quarantined=report.quarantined,
        aborted=report.aborted,
        manifest=report.manifest_path,
    )


def _cmd_make_corpus(args) -> int:
    root = synthcorpus.build_corpus(Path(args.out))
    _log(event="corpus", path=str(root), videos=len(synthcorpus.default_specs()))
    return 0


def _cmd_init_config(args) -> int:
    RunConfig().save(Path(args.out))
    _log(event="config", path=args.out)
    return 0


def _cmd_run(args) -> int:
    config = _load_config(args)
    report = run_pipeline(
        config,
        Path(args.corpus),
        Path(args.run_dir),
        stop_after=args.stop_after,
    )
    _report_summary(report)
    return 1 if report.aborted else 0


def _cmd_resume(args) -> int:
    config = _load_config(args)
    report = resume(config, Path(args.corpus), Path(args.run_dir))
    _report_summary(report)
    return 1 if report.aborted else 0


def _cmd_stats(args) -> int:
    manifest = DatasetManifest.load(Path(args.manifest))
    stats = compute_stats(manifest)
    problems = verify_counts_table(
        stats["rows"], stats["total"], split_complete=args.split_complete
    )
    print(format_stats_table(stats))
    for problem in problems:
        _log(event="counts_problem", detail=problem)
    return 1 if problems else 0


def _parse_targets(pairs: list[str]) -> dict:
    targets = {}
    for pair in pairs:
        key, _, value = pair.partition("=")
        targets[key] = int(value)
    return targets


def _cmd_split(args) -> int:
    manifest = DatasetManifest.load(Path(args.manifest))
    spec = SplitSpec(targets=_parse_targets(args.target), seed=args.seed)
    result = split_eval(manifest, spec)
    result.save(Path(args.out))
    test = sum(1 for r in result.instances if r["split"] == "test")
    _log(event="split", test=test, train=len(result.instances) - test, out=args.out)
    return 0


def _cmd_export(args) -> int:
    manifest = DatasetManifest.load(Path(args.manifest))
    paths = export_sft(manifest, Path(args.out), include_test=args.include_test)
    _log(event="export", files={k: str(v) for k, v in paths.items()})
    return 0


def _cmd_audit_sample(args) -> int:
    manifest = DatasetManifest.load(Path(args.manifest))
    bundle = verify.sample_for_audit(manifest, n=args.n, seed=args.seed)
    verify.write_audit_bundle(bundle, Path(args.out))
    _log(event="audit_sample", n=len(bundle), out=args.out)
    return 0


def _cmd_audit_apply(args) -> int:
    manifest = DatasetManifest.load(Path(args.manifest))
    decisions = verify.read_decisions(Path(args.decisions))
    result = verify.apply_audit(decisions, manifest)
    result.save(Path(args.out))
    _log(event="audit_apply", removed=len(manifest.instances) - len(result.instances), out=args.out)
    return 0


def _cmd_eval(args) -> int:
    fixtures = json.loads(Path(args.fixtures).read_text(encoding="utf-8"))
    chat = ScriptedChatBackend(
        rules=fixtures.get("chat_rules", []),
        digest_table=fixtures.get("chat_digests", {}),
        default=fixtures.get("chat_default"),
    )
    tokens = HashedOneHotTokenEmbedder()
    by_subtype: dict[str, list[evalharness.EvalRecord]] = {}
    with open(args.records, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            record = evalharness.EvalRecord(
                question=row["question"],
                label=row["label"],
                scene_texts=row.get("scene_texts", []),
                supplemental_context=row.get("supplemental_context", []),
                raw_response=row.get("response", ""),
            )
            evalharness.evaluate_record(record, chat, chat, tokens, strip_markers=args.strip_markers)
            by_subtype.setdefault(row.get("subtype", "all"), []).append(record)
    report = evalharness.aggregate_report(by_subtype)
    print(evalharness.format_report_table(report))
    if args.out:
        Path(args.out).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    for warning in report.get("warnings", []):
        _log(event="warning", detail=warning)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vidinstruct", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-corpus", help="generate the synthetic demo corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_make_corpus)

    p = sub.add_parser("init-config", help="write a default run configuration")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_init_config)

    for name, func, resumable in (("run", _cmd_run, True), ("resume", _cmd_resume, False)):
        p = sub.add_parser(name, help=f"{name} a pipeline over a corpus directory")
        p.add_argument("--config", help="run configuration JSON (defaults used when omitted)")
        p.add_argument("--corpus", required=True)
        p.add_argument("--run-dir", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--parallelism", type=int)
        if resumable:
            p.add_argument("--stop-after", choices=STAGES)
        p.set_defaults(func=func)

    p = sub.add_parser("stats", help="print the manifest counts table")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split-complete", action="store_true", help="require every instance to be train or test")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("split", help="label the evaluation split on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target", action="append", default=[], metavar="SUBTYPE=N")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("export", help="export SFT training files per kind")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--include-test", action="store_true")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("audit-sample", help="draw a stratified expert-audit bundle")
    p.add_argument("--manifest", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_audit_sample)

    p = sub.add_parser("audit-apply", help="apply reviewer decisions to a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--decisions", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_audit_apply)

    p = sub.add_parser("eval", help="judge model responses and print the report")
    p.add_argument("--records", required=True, help="JSONL of question/label/response rows")
    p.add_argument("--fixtures", required=True, help="scripted chat fixtures for extractor and judge")
    p.add_argument("--out")
    p.add_argument("--strip-markers", action="store_true")
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VidinstructError as exc:
        _log(event="error", kind=type(exc).__name__, detail=str(exc))
        return 1
    except (OSError, ValueError, KeyError) as exc:
        _log(event="error", kind=type(exc).__name__, detail=str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
