"""Run orchestration: persisted, resumable debugging runs.

A run is a directory — sampled manifest, predictions, categorization, label
audit, and saliency explanations for the worst offenders — plus a run.json
that records config, stage completion, and artifact paths. Directories are
append-only; re-entering an interrupted run skips completed stages; child
runs produced by remediation link back to their parent and reuse its image
set so before/after comparison is always apples to apples.

Layout:

    runs/<run_id>/
        run.json                 RunRecord snapshot (atomic rewrite)
        manifest.jsonl           the sampled dataset slice
        predictions.jsonl        one {"id", "detections"} line per image
        categories.json          per-image category + matching, plus stats
        audit.json               out-of-bounds label audit
        explanations/<image>/<target>.{png,f32,json}
        annotations.jsonl        expert notes, append-only
        remediations.jsonl       applied remediation plans, append-only
"""
from __future__ import annotations

import json
import os
import time
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from filelock import FileLock, Timeout

from . import detector as detector_mod
from .dataset import (
    DatasetManifest,
    Padding,
    audit_out_of_bounds,
    load_manifest,
    pad_manifest,
    relabel,
    sample,
    save_manifest,
)
from .detector import DetectorConfig, DetectorError
from .evaluation import (
    CATEGORY_ORDER,
    Category,
    CategoryStats,
    ComparisonTable,
    categorize,
    compare_stats,
    match_boxes,
    summarize,
)
from .geometry import BBox, Detection, clamp_box
from .imgio import load_image, save_image
from .saliency import (
    MaskSpec,
    SaliencyError,
    explain,
    render_overlay,
    write_raw,
    write_sidecar,
)

SCHEMA_VERSION = 1
STAGES = ("sample", "predict", "categorize", "audit", "explain")
DEFAULT_EXPLAIN_K = 5

HYPOTHESIS_TAGS = (
    "dataset-bias",
    "label-error",
    "occlusion",
    "model-architecture",
    "other",
)

REMEDIATION_ACTIONS = ("relabel", "pad")

_ARTIFACT_FILES = {
    "sample": "manifest.jsonl",
    "predict": "predictions.jsonl",
    "categorize": "categories.json",
    "audit": "audit.json",
}


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class RunConfig:
    manifest_path: str
    detector: DetectorConfig
    seed: int = 0
    explain_k: int = DEFAULT_EXPLAIN_K
    mask_spec: MaskSpec = field(default_factory=MaskSpec)
    # Child runs get the parent's already-sampled manifest verbatim;
    # re-sampling 10% of an already-10% slice would shrink the image set
    # and break comparisons.
    sample: bool = True

    def __post_init__(self) -> None:
        if self.explain_k < 0:
            raise ValueError(f"explain_k must be >= 0, got {self.explain_k}")

    def to_json_dict(self) -> dict:
        return {
            "manifest_path": self.manifest_path,
            "detector": self.detector.to_json_dict(),
            "seed": self.seed,
            "explain_k": self.explain_k,
            "mask_spec": self.mask_spec.to_json_dict(),
            "sample": self.sample,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "RunConfig":
        return cls(
            manifest_path=data["manifest_path"],
            detector=DetectorConfig.from_json_dict(data["detector"]),
            seed=data["seed"],
            explain_k=data["explain_k"],
            mask_spec=MaskSpec.from_json_dict(data["mask_spec"]),
            sample=data["sample"],
        )


@dataclass
class RunRecord:
    run_id: str
    config: RunConfig
    created_at: str
    status: str = "running"  # running | completed | failed
    error: str | None = None
    parent_run_id: str | None = None
    stages: dict = field(default_factory=lambda: {s: False for s in STAGES})
    artifacts: dict = field(default_factory=dict)  # stage -> relative path
    explanations: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "run_id": self.run_id,
            "created_at": self.created_at,
            "status": self.status,
            "error": self.error,
            "parent_run_id": self.parent_run_id,
            "config": self.config.to_json_dict(),
            "stages": {s: bool(self.stages.get(s, False)) for s in STAGES},
            "artifacts": dict(self.artifacts),
            "explanations": list(self.explanations),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "RunRecord":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(
                f"unsupported run schema_version {data.get('schema_version')!r}"
            )
        return cls(
            run_id=data["run_id"],
            config=RunConfig.from_json_dict(data["config"]),
            created_at=data["created_at"],
            status=data["status"],
            error=data.get("error"),
            parent_run_id=data.get("parent_run_id"),
            stages={s: bool(data["stages"].get(s, False)) for s in STAGES},
            artifacts=dict(data.get("artifacts", {})),
            explanations=list(data.get("explanations", [])),
        )


# --- run directory plumbing ---------------------------------------------------


def run_dir(runs_root: str | Path, run_id: str) -> Path:
    # Absolute so that paths persisted into run artifacts (child manifests,
    # padded images) stay valid regardless of the caller's working directory.
    return Path(os.path.abspath(Path(runs_root) / run_id))


def new_run_id(runs_root: str | Path) -> str:
    while True:
        candidate = f"{time.strftime('%Y%m%d-%H%M%S')}-{uuid.uuid4().hex[:4]}"
        if not run_dir(runs_root, candidate).exists():
            return candidate


def _atomic_write_json(path: Path, payload: dict) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def save_run(runs_root: str | Path, record: RunRecord) -> None:
    _atomic_write_json(run_dir(runs_root, record.run_id) / "run.json", record.to_json_dict())


def load_run(runs_root: str | Path, run_id: str) -> RunRecord:
    path = run_dir(runs_root, run_id) / "run.json"
    if not path.exists():
        raise FileNotFoundError(f"no run {run_id!r} under {runs_root}")
    with open(path) as fh:
        return RunRecord.from_json_dict(json.load(fh))


def list_runs(runs_root: str | Path) -> list[RunRecord]:
    root = Path(runs_root)
    records = []
    if not root.exists():
        return records
    for entry in sorted(root.iterdir()):
        if not (entry / "run.json").exists():
            continue
        try:
            records.append(load_run(root, entry.name))
        except (ValueError, KeyError, json.JSONDecodeError):
            continue  # junk directories don't take the listing down
    records.sort(key=lambda r: (r.created_at, r.run_id))
    return records


def _run_lock(directory: Path) -> FileLock:
    return FileLock(str(directory / ".lock"))


# --- detections on the wire ----------------------------------------------------


def _detection_to_json(det: Detection) -> dict:
    return {
        "box": det.box.as_list(),
        "objectness": det.objectness,
        "class_probs": list(det.class_probs) if det.class_probs is not None else None,
    }


def _detection_from_json(obj: dict) -> Detection:
    probs = obj.get("class_probs")
    return Detection(
        box=BBox.from_list(obj["box"]),
        objectness=obj["objectness"],
        class_probs=tuple(probs) if probs is not None else None,
    )


def load_predictions(path: str | Path) -> dict[str, list[Detection]]:
    out: dict[str, list[Detection]] = {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out[obj["id"]] = [_detection_from_json(d) for d in obj["detections"]]
    return out


def load_categories(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


# --- stages --------------------------------------------------------------------


def _stage_sample(record: RunRecord, directory: Path) -> None:
    source = load_manifest(record.config.manifest_path)
    sampled = sample(source, record.config.seed) if record.config.sample else source
    save_manifest(sampled, directory / "manifest.jsonl")
    record.artifacts["sample"] = "manifest.jsonl"


def predict_manifest(manifest: DatasetManifest, adapter, path: str | Path) -> None:
    """Run the adapter over every manifest image, writing predictions.jsonl."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        for rec in manifest.records:
            detections = adapter.detect(rec.path, rec.id)
            fh.write(
                json.dumps(
                    {"id": rec.id, "detections": [_detection_to_json(d) for d in detections]}
                )
                + "\n"
            )
    os.replace(tmp, path)


def _stage_predict(record: RunRecord, directory: Path) -> None:
    manifest = load_manifest(directory / "manifest.jsonl")
    adapter = detector_mod.create_adapter(record.config.detector)
    try:
        predict_manifest(manifest, adapter, directory / "predictions.jsonl")
    finally:
        adapter.close()
    record.artifacts["predict"] = "predictions.jsonl"


def categorize_manifest(
    manifest: DatasetManifest, predictions: dict[str, list[Detection]]
) -> dict:
    """Categorize every image and return the categories.json payload."""
    images = []
    assigned: list[tuple[str, Category]] = []
    for rec in manifest.records:
        if rec.id not in predictions:
            raise ValueError(f"predictions.jsonl is missing image {rec.id!r}")
        dets = predictions[rec.id]
        gt = [g.box for g in rec.counted_boxes()]
        category = categorize(dets, gt)
        matching = match_boxes([d.box for d in dets], gt)
        images.append(
            {
                "id": rec.id,
                "category": category.value,
                "matching": matching.to_json_dict(),
            }
        )
        assigned.append((rec.id, category))
    stats = summarize(assigned)
    return {"schema_version": SCHEMA_VERSION, "images": images, "stats": stats.to_json_dict()}


def _stage_categorize(record: RunRecord, directory: Path) -> None:
    manifest = load_manifest(directory / "manifest.jsonl")
    predictions = load_predictions(directory / "predictions.jsonl")
    _atomic_write_json(directory / "categories.json", categorize_manifest(manifest, predictions))
    record.artifacts["categorize"] = "categories.json"


def _stage_audit(record: RunRecord, directory: Path) -> None:
    manifest = load_manifest(directory / "manifest.jsonl")
    report = audit_out_of_bounds(manifest)
    _atomic_write_json(
        directory / "audit.json",
        {"schema_version": SCHEMA_VERSION, **report.to_json_dict()},
    )
    record.artifacts["audit"] = "audit.json"


@dataclass(frozen=True)
class _ExplainTask:
    image_id: str
    category: Category
    target_token: str
    target: Detection


def _mean_matched_iou(matching: dict) -> float:
    pairs = matching.get("pairs", [])
    if not pairs:
        return 0.0
    return sum(p[2] for p in pairs) / len(pairs)


def select_explanations(
    categories: dict,
    predictions: dict[str, list[Detection]],
    manifest: DatasetManifest,
    k: int,
) -> list[_ExplainTask]:
    """Choose explanation targets: for each failing category, the K worst
    images — largest count error first, then weakest matched IoU — and one
    target box per image that embodies the failure."""
    by_category: dict[Category, list[dict]] = {}
    for entry in categories["images"]:
        cat = Category(entry["category"])
        if cat is Category.CORRECT_LOCALIZATION:
            continue
        by_category.setdefault(cat, []).append(entry)

    tasks: list[_ExplainTask] = []
    for cat in CATEGORY_ORDER:
        entries = by_category.get(cat)
        if not entries:
            continue

        def rank(entry: dict):
            rec = manifest.get(entry["id"])
            count_error = abs(len(predictions[entry["id"]]) - len(rec.counted_boxes()))
            return (-count_error, _mean_matched_iou(entry["matching"]), entry["id"])

        for entry in sorted(entries, key=rank)[:k]:
            task = _target_for(entry, cat, predictions, manifest)
            if task is not None:
                tasks.append(task)
    return tasks


def _target_for(
    entry: dict,
    category: Category,
    predictions: dict[str, list[Detection]],
    manifest: DatasetManifest,
) -> _ExplainTask | None:
    """Pick the box that embodies an image's failure.

    Under-detection: the first missed ground-truth box (what should have
    been found). Over-detection: the first surplus prediction (what was
    hallucinated). Mislocalization: the prediction of the worst matched
    pair. Indices refer to counted (non-ignore) ground truth and to
    prediction order.
    """
    rec = manifest.get(entry["id"])
    matching = entry["matching"]
    dets = predictions[entry["id"]]
    if category is Category.UNDER_DETECTION:
        unmatched = matching.get("unmatched_gts", [])
        if not unmatched:
            return None
        idx = unmatched[0]
        gt_box = rec.counted_boxes()[idx].box
        target = Detection(box=clamp_box(gt_box, rec.width, rec.height), objectness=1.0)
        return _ExplainTask(rec.id, category, f"gt-{idx}", target)
    if category is Category.OVER_DETECTION:
        unmatched = matching.get("unmatched_preds", [])
        if not unmatched:
            return None
        idx = unmatched[0]
    else:  # mislocalization: worst pair, else first unmatched prediction
        pairs = matching.get("pairs", [])
        if pairs:
            idx = min(pairs, key=lambda p: p[2])[0]
        elif matching.get("unmatched_preds"):
            idx = matching["unmatched_preds"][0]
        else:
            return None
    det = dets[idx]
    clamped = replace(det, box=clamp_box(det.box, rec.width, rec.height))
    return _ExplainTask(rec.id, category, f"pred-{idx}", clamped)


def _stage_explain(record: RunRecord, directory: Path) -> None:
    manifest = load_manifest(directory / "manifest.jsonl")
    predictions = load_predictions(directory / "predictions.jsonl")
    categories = load_categories(directory / "categories.json")
    tasks = select_explanations(categories, predictions, manifest, record.config.explain_k)
    record.explanations = []
    if not tasks:
        return
    adapter = detector_mod.create_adapter(record.config.detector)
    try:
        for task in tasks:
            rec = manifest.get(task.image_id)
            image = load_image(rec.path)
            smap = explain(image, task.target, adapter, record.config.mask_spec, rec.id)
            out_dir = directory / "explanations" / task.image_id
            out_dir.mkdir(parents=True, exist_ok=True)
            base = out_dir / task.target_token
            save_image(render_overlay(image, smap), base.with_suffix(".png"))
            write_raw(smap, base.with_suffix(".f32"))
            write_sidecar(smap, base.with_suffix(".json"))
            rel = f"explanations/{task.image_id}/{task.target_token}"
            record.explanations.append(
                {
                    "image_id": task.image_id,
                    "category": task.category.value,
                    "target": task.target_token,
                    "overlay": f"{rel}.png",
                    "raw": f"{rel}.f32",
                    "sidecar": f"{rel}.json",
                    "skipped_samples": smap.skipped_samples,
                }
            )
    finally:
        adapter.close()


_STAGE_FNS: dict[str, Callable[[RunRecord, Path], None]] = {
    "sample": _stage_sample,
    "predict": _stage_predict,
    "categorize": _stage_categorize,
    "audit": _stage_audit,
    "explain": _stage_explain,
}


def run_debug(
    config: RunConfig,
    runs_root: str | Path,
    run_id: str | None = None,
    parent_run_id: str | None = None,
) -> RunRecord:
    """Execute (or resume) a debugging run; returns its final RunRecord.

    Stage failures caused by the detector or the saliency loop mark the run
    "failed" with the stage named in .error — artifacts of earlier stages
    stay on disk. Passing an existing run_id resumes: completed stages are
    skipped entirely (no detector traffic for finished work).
    """
    runs_root = Path(runs_root)
    runs_root.mkdir(parents=True, exist_ok=True)
    if run_id is None:
        run_id = new_run_id(runs_root)
    directory = run_dir(runs_root, run_id)
    directory.mkdir(exist_ok=True)
    lock = _run_lock(directory)
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise RuntimeError(f"run {run_id!r} already has an active writer") from None
    try:
        if (directory / "run.json").exists():
            record = load_run(runs_root, run_id)
            if record.status == "completed":
                return record
        else:
            record = RunRecord(
                run_id=run_id,
                config=config,
                created_at=_utcnow(),
                parent_run_id=parent_run_id,
            )
            (directory / "annotations.jsonl").touch()
            (directory / "remediations.jsonl").touch()
            save_run(runs_root, record)
        record.status = "running"
        record.error = None
        for stage in STAGES:
            if record.stages[stage]:
                continue
            try:
                _STAGE_FNS[stage](record, directory)
            except (DetectorError, SaliencyError) as exc:
                record.status = "failed"
                record.error = f"{stage}: {exc}"
                save_run(runs_root, record)
                return record
            record.stages[stage] = True
            save_run(runs_root, record)
        record.status = "completed"
        save_run(runs_root, record)
        return record
    finally:
        lock.release()


# --- remediation ----------------------------------------------------------------


@dataclass
class RemediationPlan:
    run_id: str
    action: str  # relabel | pad
    padding: Padding | None = None
    fill: int = 128
    note: str = ""
    status: str = "proposed"  # proposed | applied
    child_run_id: str | None = None
    created_at: str = field(default_factory=_utcnow)

    def __post_init__(self) -> None:
        if self.action not in REMEDIATION_ACTIONS:
            raise ValueError(
                f"unknown remediation action {self.action!r}; "
                f"expected one of {REMEDIATION_ACTIONS}"
            )
        if self.action == "pad" and self.padding is None:
            raise ValueError("pad remediation needs padding amounts")

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "run_id": self.run_id,
            "action": self.action,
            "padding": list(self.padding.as_tuple()) if self.padding else None,
            "fill": self.fill,
            "note": self.note,
            "status": self.status,
            "child_run_id": self.child_run_id,
            "created_at": self.created_at,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "RemediationPlan":
        padding = data.get("padding")
        return cls(
            run_id=data["run_id"],
            action=data["action"],
            padding=Padding(*padding) if padding else None,
            fill=data.get("fill", 128),
            note=data.get("note", ""),
            status=data.get("status", "proposed"),
            child_run_id=data.get("child_run_id"),
            created_at=data.get("created_at", _utcnow()),
        )


def apply_remediation(
    plan: RemediationPlan, runs_root: str | Path, run_id: str | None = None
) -> RunRecord:
    """Remediate a completed run's manifest and re-run the pipeline on it.

    The child run reuses the parent's config and seed but skips sampling —
    its manifest IS the remediated copy of the parent's sampled manifest, so
    both runs cover the same image ids. The applied plan (with the child id)
    is appended to the parent's remediations.jsonl whatever the child's
    outcome; a child that fails mid-pipeline is still linked, and its run
    record says why it failed.
    """
    runs_root = Path(runs_root)
    parent = load_run(runs_root, plan.run_id)
    if parent.status != "completed":
        raise ValueError(f"run {plan.run_id!r} is not completed (status: {parent.status})")
    parent_manifest = load_manifest(run_dir(runs_root, plan.run_id) / "manifest.jsonl")

    child_id = run_id or new_run_id(runs_root)
    child_dir = run_dir(runs_root, child_id)
    child_dir.mkdir(parents=True, exist_ok=True)

    if plan.action == "relabel":
        remediated, _ = relabel(parent_manifest)
    else:
        remediated = pad_manifest(
            parent_manifest, plan.padding, fill=plan.fill, out_dir=child_dir / "padded_images"
        )
    input_manifest = child_dir / "input_manifest.jsonl"
    save_manifest(remediated, input_manifest)

    child_config = replace(
        parent.config, manifest_path=str(input_manifest), sample=False
    )
    child = run_debug(child_config, runs_root, run_id=child_id, parent_run_id=plan.run_id)

    plan.status = "applied"
    plan.child_run_id = child.run_id
    parent_dir = run_dir(runs_root, plan.run_id)
    with _run_lock(parent_dir):
        with open(parent_dir / "remediations.jsonl", "a") as fh:
            fh.write(json.dumps(plan.to_json_dict()) + "\n")
    return child


def load_remediations(runs_root: str | Path, run_id: str) -> list[RemediationPlan]:
    path = run_dir(runs_root, run_id) / "remediations.jsonl"
    if not path.exists():
        return []
    plans = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                plans.append(RemediationPlan.from_json_dict(json.loads(line)))
    return plans


# --- annotations ------------------------------------------------------------------


@dataclass(frozen=True)
class Annotation:
    run_id: str
    image_id: str
    hypothesis: str
    note: str = ""
    author: str = ""
    box_index: int | None = None
    created_at: str = field(default_factory=_utcnow)

    def __post_init__(self) -> None:
        if self.hypothesis not in HYPOTHESIS_TAGS:
            raise ValueError(
                f"unknown hypothesis {self.hypothesis!r}; expected one of {HYPOTHESIS_TAGS}"
            )

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "run_id": self.run_id,
            "image_id": self.image_id,
            "box_index": self.box_index,
            "hypothesis": self.hypothesis,
            "note": self.note,
            "author": self.author,
            "created_at": self.created_at,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Annotation":
        return cls(
            run_id=data["run_id"],
            image_id=data["image_id"],
            box_index=data.get("box_index"),
            hypothesis=data["hypothesis"],
            note=data.get("note", ""),
            author=data.get("author", ""),
            created_at=data.get("created_at", _utcnow()),
        )


def append_annotation(runs_root: str | Path, annotation: Annotation) -> None:
    """Validate the reference and append. Annotations are immutable history:
    there is no update or delete."""
    directory = run_dir(runs_root, annotation.run_id)
    if not (directory / "run.json").exists():
        raise FileNotFoundError(f"no run {annotation.run_id!r} under {runs_root}")
    manifest = load_manifest(directory / "manifest.jsonl")
    if annotation.image_id not in set(manifest.ids()):
        raise ValueError(
            f"image {annotation.image_id!r} is not part of run {annotation.run_id!r}"
        )
    with _run_lock(directory):
        with open(directory / "annotations.jsonl", "a") as fh:
            fh.write(json.dumps(annotation.to_json_dict()) + "\n")


def load_annotations(runs_root: str | Path, run_id: str) -> list[Annotation]:
    path = run_dir(runs_root, run_id) / "annotations.jsonl"
    if not path.exists():
        return []
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(Annotation.from_json_dict(json.loads(line)))
    return out


# --- comparison --------------------------------------------------------------------


@dataclass(frozen=True)
class RunComparison:
    base_run_id: str
    target_run_id: str
    table: ComparisonTable
    transitions: tuple[dict, ...]

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "base_run_id": self.base_run_id,
            "target_run_id": self.target_run_id,
            "table": self.table.to_json_dict(),
            "transitions": list(self.transitions),
        }


def _explanations_for(record: RunRecord, image_id: str) -> list[dict]:
    return [e for e in record.explanations if e["image_id"] == image_id]


def compare_runs(runs_root: str | Path, base_id: str, target_id: str) -> RunComparison:
    """Category movement between two completed runs over the same images."""
    base = load_run(runs_root, base_id)
    target = load_run(runs_root, target_id)
    for record in (base, target):
        if record.status != "completed":
            raise ValueError(
                f"run {record.run_id!r} is not completed (status: {record.status})"
            )
    base_cats = load_categories(run_dir(runs_root, base_id) / "categories.json")
    target_cats = load_categories(run_dir(runs_root, target_id) / "categories.json")
    base_by_id = {e["id"]: e["category"] for e in base_cats["images"]}
    target_by_id = {e["id"]: e["category"] for e in target_cats["images"]}
    if set(base_by_id) != set(target_by_id):
        raise ValueError(
            "runs cover different image sets; comparison requires the same sampled images"
        )
    table = compare_stats(
        CategoryStats.from_json_dict(base_cats["stats"]),
        CategoryStats.from_json_dict(target_cats["stats"]),
    )
    transitions = []
    for image_id in sorted(base_by_id):
        if base_by_id[image_id] == target_by_id[image_id]:
            continue
        transitions.append(
            {
                "id": image_id,
                "base_category": base_by_id[image_id],
                "target_category": target_by_id[image_id],
                "base_explanations": _explanations_for(base, image_id),
                "target_explanations": _explanations_for(target, image_id),
            }
        )
    return RunComparison(
        base_run_id=base_id,
        target_run_id=target_id,
        table=table,
        transitions=tuple(transitions),
    )


# --- integrity ----------------------------------------------------------------------


def verify_run(runs_root: str | Path, run_id: str) -> list[str]:
    """Integrity check; returns a list of problems (empty = sound).

    Checks the stage-order invariant, that every artifact a completed stage
    claims actually exists (raw maps at their declared sizes included), that
    predictions/categories cover exactly the sampled image ids, and that the
    parent chain resolves without cycles.
    """
    problems: list[str] = []
    directory = run_dir(runs_root, run_id)
    try:
        record = load_run(runs_root, run_id)
    except (FileNotFoundError, ValueError, KeyError, json.JSONDecodeError) as exc:
        return [f"run.json unreadable: {exc}"]

    done = [record.stages[s] for s in STAGES]
    if any(later and not earlier for earlier, later in zip(done, done[1:])):
        problems.append(f"stages out of order: {record.stages}")
    if record.status == "completed" and not all(done):
        problems.append("status is completed but not every stage is")

    for stage, filename in _ARTIFACT_FILES.items():
        if record.stages[stage] and not (directory / filename).exists():
            problems.append(f"{stage} is complete but {filename} is missing")

    if record.stages["explain"]:
        for entry in record.explanations:
            for key in ("overlay", "raw", "sidecar"):
                if not (directory / entry[key]).exists():
                    problems.append(f"explanation artifact missing: {entry[key]}")
            sidecar_path = directory / entry["sidecar"]
            raw_path = directory / entry["raw"]
            if sidecar_path.exists() and raw_path.exists():
                with open(sidecar_path) as fh:
                    sidecar = json.load(fh)
                expected = sidecar["width"] * sidecar["height"] * 4
                actual = raw_path.stat().st_size
                if actual != expected:
                    problems.append(
                        f"{entry['raw']}: {actual} bytes, sidecar implies {expected}"
                    )

    manifest = None
    if record.stages["sample"] and (directory / "manifest.jsonl").exists():
        try:
            manifest = load_manifest(directory / "manifest.jsonl")
        except ValueError as exc:
            problems.append(f"manifest.jsonl unreadable: {exc}")
    if manifest is not None:
        ids = set(manifest.ids())
        if record.stages["predict"] and (directory / "predictions.jsonl").exists():
            predicted = set(load_predictions(directory / "predictions.jsonl"))
            if predicted != ids:
                problems.append("predictions.jsonl does not cover the sampled image ids")
        if record.stages["categorize"] and (directory / "categories.json").exists():
            cats = load_categories(directory / "categories.json")
            cat_ids = {e["id"] for e in cats["images"]}
            if cat_ids != ids:
                problems.append("categories.json does not cover the sampled image ids")
            try:
                stats = CategoryStats.from_json_dict(cats["stats"])
                if stats.total != len(ids):
                    problems.append(
                        f"stats total {stats.total} != {len(ids)} sampled images"
                    )
            except (ValueError, KeyError) as exc:
                problems.append(f"categories.json stats invalid: {exc}")

    seen = {run_id}
    cursor = record.parent_run_id
    while cursor is not None:
        if cursor in seen:
            problems.append(f"parent chain contains a cycle at {cursor!r}")
            break
        seen.add(cursor)
        try:
            cursor = load_run(runs_root, cursor).parent_run_id
        except (FileNotFoundError, ValueError) as exc:
            problems.append(f"parent run unreadable: {exc}")
            break
    return problems
