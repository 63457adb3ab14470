"""Manifest assembly, statistics, evaluation-split construction, SFT export.

The manifest is the assembled, verified corpus: one record per instruction
instance with kind/subtype, modality, split label, and provenance. The
evaluation split is VQA-only, image-disjoint from training, and built by
seed-deterministic stratified sampling over (modality, condition tag).
"""

from __future__ import annotations

import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from random import Random
from typing import Optional, Sequence

from .errors import ConfigError
from .prompts import load_template

KINDS = ("vqa", "conversation", "cot")
VQA_SUBTYPES = ("yes_no", "what", "where")
SPLITS = ("train", "test", "unsplit")


@lru_cache(maxsize=1)
def condition_vocabulary() -> tuple[str, ...]:
    text = resources.files("vidinstruct").joinpath("data/condition_vocab.txt").read_text(encoding="utf-8")
    terms = [line.strip().lower() for line in text.splitlines()]
    return tuple(t for t in terms if t and not t.startswith("#"))


def extract_condition_tags(text: str, vocab: Optional[Sequence[str]] = None) -> list[str]:
    """Lexical whole-phrase matching against the shipped vocabulary."""
    vocab = vocab if vocab is not None else condition_vocabulary()
    haystack = re.sub(r"\s+", " ", text.lower())
    tags = []
    for term in vocab:
        if re.search(r"(?<!\w)" + re.escape(term) + r"(?!\w)", haystack):
            tags.append(term)
    return tags


def validate_instance(rec: dict) -> None:
    if rec.get("kind") not in KINDS:
        raise ValueError(f"unknown kind {rec.get('kind')!r}")
    if rec["kind"] == "vqa" and rec.get("subtype") not in VQA_SUBTYPES:
        raise ValueError(f"vqa instance needs a subtype, got {rec.get('subtype')!r}")
    for key in ("instance_id", "image_id", "modality"):
        if not rec.get(key):
            raise ValueError(f"instance missing {key}")
    if rec.get("split", "unsplit") not in SPLITS:
        raise ValueError(f"bad split label {rec.get('split')!r}")


@dataclass
class DatasetManifest:
    run_id: str
    instances: list[dict] = field(default_factory=list)
    audit_trail: list[dict] = field(default_factory=list)

    def validate(self) -> None:
        seen = set()
        for rec in self.instances:
            validate_instance(rec)
            if rec["instance_id"] in seen:
                raise ValueError(f"duplicate instance_id {rec['instance_id']}")
            seen.add(rec["instance_id"])
        test_images = {r["image_id"] for r in self.instances if r.get("split") == "test"}
        train_images = {r["image_id"] for r in self.instances if r.get("split") == "train"}
        overlap = test_images & train_images
        if overlap:
            raise ValueError(f"test/train image overlap: {sorted(overlap)[:5]}")

    def unique_images(self) -> int:
        return len({r["image_id"] for r in self.instances})

    def save(self, directory: Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "manifest.jsonl", "w", encoding="utf-8") as fh:
            for rec in sorted(self.instances, key=lambda r: r["instance_id"]):
                fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")
        summary = {
            "run_id": self.run_id,
            "instances": len(self.instances),
            "unique_images": self.unique_images(),
            "audit_trail": self.audit_trail,
        }
        (directory / "manifest_summary.json").write_text(
            json.dumps(summary, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, directory: Path) -> "DatasetManifest":
        directory = Path(directory)
        summary = json.loads((directory / "manifest_summary.json").read_text(encoding="utf-8"))
        instances = []
        with open(directory / "manifest.jsonl", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    instances.append(json.loads(line))
        return cls(run_id=summary["run_id"], instances=instances, audit_trail=summary.get("audit_trail", []))


def assemble_manifest(instances: Sequence[dict], run_id: str) -> DatasetManifest:
    """Build a manifest from verified (keep-labeled) instances."""
    records = []
    for rec in instances:
        rec = dict(rec)
        rec.setdefault("split", "unsplit")
        if not rec.get("condition_tags"):
            rec["condition_tags"] = extract_condition_tags(instance_text(rec))
        validate_instance(rec)
        records.append(rec)
    manifest = DatasetManifest(run_id=run_id, instances=sorted(records, key=lambda r: r["instance_id"]))
    manifest.validate()
    return manifest


def instance_text(rec: dict) -> str:
    if rec["kind"] == "vqa":
        return f"{rec.get('question', '')} {rec.get('answer', '')}"
    if rec["kind"] == "cot":
        return f"{rec.get('user_text', '')} {rec.get('assistant_text', '')}"
    return " ".join(t.get("value", "") for t in rec.get("turns", []))


def proportional_allocation(counts: dict, n: int) -> dict:
    """Largest-remainder proportional rounding of n over strata counts."""
    total = sum(counts.values())
    if total == 0 or n <= 0:
        return {k: 0 for k in counts}
    n = min(n, total)
    quotas = {k: n * c / total for k, c in counts.items()}
    alloc = {k: min(int(q), counts[k]) for k, q in quotas.items()}
    remainder = n - sum(alloc.values())
    # distribute by largest fractional part, deterministically tie-broken by key
    order = sorted(counts, key=lambda k: (-(quotas[k] - int(quotas[k])), str(k)))
    i = 0
    while remainder > 0:
        k = order[i % len(order)]
        if alloc[k] < counts[k]:
            alloc[k] += 1
            remainder -= 1
        i += 1
    return alloc


@dataclass
class SplitSpec:
    targets: dict = field(default_factory=lambda: {"yes_no": 450, "what": 451, "where": 333})
    seed: int = 0

    def validate(self) -> None:
        for key, value in self.targets.items():
            if key not in VQA_SUBTYPES:
                raise ConfigError(f"unknown subtype target {key!r}")
            if value < 0:
                raise ConfigError("split targets must be non-negative")


def split_eval(manifest: DatasetManifest, spec: SplitSpec) -> DatasetManifest:
    """Label exactly the target count per subtype as test; all else train.

    Image-disjointness is guaranteed by drawing test instances only from
    images that carry a single instance in the whole corpus, so pulling an
    image out of training never strands sibling instances.
    """
    spec.validate()
    images_per = Counter(r["image_id"] for r in manifest.instances)
    chosen: set[str] = set()
    for subtype in VQA_SUBTYPES:
        target = int(spec.targets.get(subtype, 0))
        if target == 0:
            continue
        candidates = [
            r
            for r in manifest.instances
            if r["kind"] == "vqa" and r["subtype"] == subtype and images_per[r["image_id"]] == 1
        ]
        if len(candidates) < target:
            raise ConfigError(
                f"subtype {subtype!r} has only {len(candidates)} eligible instances for target {target}"
            )
        strata: dict = defaultdict(list)
        for r in candidates:
            tag = (r.get("condition_tags") or ["none"])[0]
            strata[(r["modality"], tag)].append(r)
        alloc = proportional_allocation({k: len(v) for k, v in strata.items()}, target)
        for key in sorted(strata):
            members = sorted(strata[key], key=lambda r: r["instance_id"])
            rng = Random(f"{spec.seed}:{subtype}:{key}")
            for r in rng.sample(members, alloc[key]):
                chosen.add(r["instance_id"])
    out = []
    for rec in manifest.instances:
        rec = dict(rec)
        rec["split"] = "test" if rec["instance_id"] in chosen else "train"
        out.append(rec)
    result = DatasetManifest(run_id=manifest.run_id, instances=out, audit_trail=list(manifest.audit_trail))
    result.validate()
    return result


# --- statistics -----------------------------------------------------------

MODALITIES = ("CFP", "OCT", "UWF")


def _row(instances: list[dict]) -> dict:
    images = {r["image_id"]: r["modality"] for r in instances}
    modality_counts = Counter(images.values())
    return {
        "instances": len(instances),
        "images": len(images),
        "train": sum(1 for r in instances if r.get("split") == "train"),
        "test": sum(1 for r in instances if r.get("split") == "test"),
        **{m: modality_counts.get(m, 0) for m in MODALITIES},
    }


def compute_stats(manifest: DatasetManifest) -> dict:
    rows = []
    for subtype in VQA_SUBTYPES:
        members = [r for r in manifest.instances if r["kind"] == "vqa" and r["subtype"] == subtype]
        rows.append({"kind": "vqa", "subtype": subtype, **_row(members)})
    for kind in ("conversation", "cot"):
        members = [r for r in manifest.instances if r["kind"] == kind]
        rows.append({"kind": kind, "subtype": None, **_row(members)})
    total = {"kind": "total", "subtype": None, **_row(manifest.instances)}
    return {"rows": rows, "total": total}


def verify_counts_table(rows: list[dict], total: dict, split_complete: bool = True) -> list[str]:
    """Arithmetic identities a counts table must satisfy.

    Works on computed stats and on externally supplied count fixtures
    alike. With ``split_complete`` every instance must be train or test.
    """
    problems = []
    if sum(r["instances"] for r in rows) != total["instances"]:
        problems.append("per-row instances do not sum to total instances")
    if sum(r["train"] for r in rows) != total["train"]:
        problems.append("per-row train counts do not sum to total train")
    if sum(r["test"] for r in rows) != total["test"]:
        problems.append("per-row test counts do not sum to total test")
    if sum(total[m] for m in MODALITIES) != total["images"]:
        problems.append("total modality columns do not sum to total images")
    for r in rows:
        name = f"{r['kind']}/{r['subtype']}"
        if r["train"] + r["test"] > r["instances"]:
            problems.append(f"train+test exceeds instances in row {name}")
        if split_complete and r["train"] + r["test"] != r["instances"]:
            problems.append(f"train+test does not equal instances in row {name}")
        if sum(r[m] for m in MODALITIES) != r["images"]:
            problems.append(f"modality columns do not sum to images in row {name}")
    return problems


def format_stats_table(stats: dict) -> str:
    header = f"{'type':<14}{'subtype':<10}{'instances':>10}{'train':>9}{'test':>7}{'images':>9}" + "".join(
        f"{m:>8}" for m in MODALITIES
    )
    lines = [header, "-" * len(header)]
    for r in stats["rows"] + [stats["total"]]:
        lines.append(
            f"{r['kind']:<14}{(r['subtype'] or '-'):<10}{r['instances']:>10}{r['train']:>9}{r['test']:>7}"
            f"{r['images']:>9}" + "".join(f"{r[m]:>8}" for m in MODALITIES)
        )
    return "\n".join(lines)


# --- SFT export -----------------------------------------------------------

_SFT_SYSTEM = {
    "vqa": "train_vqa_system",
    "conversation": "train_conversation_system",
    "cot": "train_cot_system",
}


def sft_record(rec: dict) -> dict:
    system = load_template(_SFT_SYSTEM[rec["kind"]]).strip()
    if rec["kind"] == "vqa":
        conversations = [
            {"from": "user", "value": rec["question"]},
            {"from": "assistant", "value": rec["answer"]},
        ]
    elif rec["kind"] == "cot":
        conversations = [
            {"from": "user", "value": rec["user_text"]},
            {"from": "assistant", "value": rec["assistant_text"]},
        ]
    else:
        conversations = [{"from": t["from"], "value": t["value"]} for t in rec["turns"]]
    return {
        "id": rec["instance_id"],
        "image": rec.get("image_path", ""),
        "system": system,
        "conversations": conversations,
    }


def export_sft(manifest: DatasetManifest, out_dir: Path, include_test: bool = False) -> dict[str, Path]:
    """One line-delimited JSON file per kind; test instances excluded by default."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for kind in KINDS:
        path = out_dir / f"{kind}.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            for rec in sorted(manifest.instances, key=lambda r: r["instance_id"]):
                if rec["kind"] != kind:
                    continue
                if rec.get("split") == "test" and not include_test:
                    continue
                fh.write(json.dumps(sft_record(rec), sort_keys=True, ensure_ascii=False) + "\n")
        paths[kind] = path
    return paths


def import_sft(path: Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    return records
