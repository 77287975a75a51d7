"""Dataset manifests: ingestion, sampling, auditing, and label remediation.

The native manifest format is JSON Lines, one image record per line:

    {"id": "...", "path": "...", "width": 1280, "height": 960,
     "gt": [{"box": [x1, y1, x2, y2], "tag": "person"}, ...]}

Records also import from the ODGT crowd-dataset format, where boxes come
as "fbox" [x, y, w, h] and ignore regions carry tag "mask" or
extra.ignore = 1.
"""

from __future__ import annotations

import json
import logging
import os.path
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from detlens import imgio
from detlens.geometry import BBox, box_inside, clamp_box

logger = logging.getLogger(__name__)

TAG_PERSON = "person"
TAG_IGNORE = "ignore"
_VALID_TAGS = (TAG_PERSON, TAG_IGNORE)

SAMPLE_CAP = 1000
SAMPLE_FRACTION = 0.10

VIOLATION_NEGATIVE = "negative-coord"
VIOLATION_WIDTH = "exceeds-width"
VIOLATION_HEIGHT = "exceeds-height"


class ManifestError(ValueError):
    """A manifest file or record violates the schema."""


@dataclass(frozen=True)
class GroundTruthBox:
    box: BBox
    tag: str = TAG_PERSON

    def __post_init__(self):
        if self.tag not in _VALID_TAGS:
            raise ValueError(f"unknown tag {self.tag!r}, expected one of {_VALID_TAGS}")

    @property
    def is_ignore(self) -> bool:
        return self.tag == TAG_IGNORE

    def to_json_dict(self) -> dict:
        return {"box": self.box.as_list(), "tag": self.tag}


@dataclass(frozen=True)
class ImageRecord:
    id: str
    path: str
    width: int
    height: int
    gt_boxes: tuple[GroundTruthBox, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be non-empty")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(
                f"record {self.id!r}: nonpositive dimensions {self.width}x{self.height}"
            )
        object.__setattr__(self, "gt_boxes", tuple(self.gt_boxes))

    def counted_boxes(self) -> list[GroundTruthBox]:
        """Ground truth that participates in counting and matching."""
        return [g for g in self.gt_boxes if not g.is_ignore]

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "path": self.path,
            "width": self.width,
            "height": self.height,
            "gt": [g.to_json_dict() for g in self.gt_boxes],
        }


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    records: tuple[ImageRecord, ...]
    provenance: str = ""

    def __post_init__(self):
        if not self.name:
            raise ValueError("manifest name must be non-empty")
        object.__setattr__(self, "records", tuple(self.records))
        seen: set[str] = set()
        for rec in self.records:
            if rec.id in seen:
                raise ManifestError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)

    def __len__(self) -> int:
        return len(self.records)

    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def get(self, record_id: str) -> ImageRecord:
        for rec in self.records:
            if rec.id == record_id:
                return rec
        raise KeyError(record_id)


def _parse_record(obj: dict, where: str) -> ImageRecord:
    try:
        gt = tuple(
            GroundTruthBox(box=BBox.from_list(g["box"]), tag=g.get("tag", TAG_PERSON))
            for g in obj.get("gt", [])
        )
        return ImageRecord(
            id=str(obj["id"]),
            path=str(obj["path"]),
            width=int(obj["width"]),
            height=int(obj["height"]),
            gt_boxes=gt,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"{where}: invalid record: {exc}") from exc


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a JSONL manifest; record paths resolve relative to the file."""
    path = Path(path)
    base = path.parent
    records: list[ImageRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            rec = _parse_record(obj, where=f"{path}:{lineno}")
            if rec.id in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate record id {rec.id!r}")
            seen.add(rec.id)
            rec_path = Path(rec.path)
            if not rec_path.is_absolute():
                # Pin to absolute so the record survives being re-saved into a
                # manifest that lives somewhere else (e.g. a run directory).
                rec = replace(rec, path=os.path.abspath(base / rec_path))
            records.append(rec)
    if not records:
        raise ManifestError(f"empty manifest: {path}")
    return DatasetManifest(
        name=path.stem, records=tuple(records), provenance=f"loaded from {path}"
    )


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in manifest.records:
            fh.write(json.dumps(rec.to_json_dict()) + "\n")


_IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png", ".JPG", ".PNG")


def _find_image(image_root: Path, image_id: str) -> Path | None:
    for ext in _IMAGE_EXTENSIONS:
        candidate = image_root / f"{image_id}{ext}"
        if candidate.exists():
            return candidate
    return None


def import_odgt(path: str | Path, image_root: str | Path) -> tuple[DatasetManifest, int]:
    """Convert an ODGT annotation file to a native manifest.

    fbox [x, y, w, h] becomes corner form (x, y, x+w, y+h); boxes tagged
    "mask" or flagged extra.ignore=1 become ignore regions. Image
    dimensions are read from the files under image_root. Returns the
    manifest and the number of records skipped for missing image files.
    """
    path = Path(path)
    image_root = Path(image_root)
    records: list[ImageRecord] = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                image_id = str(obj["ID"])
                raw_boxes = obj.get("gtboxes", [])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ManifestError(f"{path}:{lineno}: unparsable ODGT line: {exc}") from exc
            image_path = _find_image(image_root, image_id)
            if image_path is None:
                skipped += 1
                logger.warning("no image for %r under %s, record skipped", image_id, image_root)
                continue
            width, height = imgio.read_image_size(image_path)
            gt = []
            for k, g in enumerate(raw_boxes):
                try:
                    x, y, w, h = (float(v) for v in g["fbox"])
                    tag = g.get("tag", TAG_PERSON)
                    ignored = tag == "mask" or int(g.get("extra", {}).get("ignore", 0)) == 1
                    gt.append(
                        GroundTruthBox(
                            box=BBox(x, y, x + w, y + h),
                            tag=TAG_IGNORE if ignored else TAG_PERSON,
                        )
                    )
                except (KeyError, TypeError, ValueError) as exc:
                    raise ManifestError(
                        f"{path}:{lineno}: bad gtbox #{k} for {image_id!r}: {exc}"
                    ) from exc
            records.append(
                ImageRecord(
                    id=image_id,
                    path=os.path.abspath(image_path),
                    width=width,
                    height=height,
                    gt_boxes=tuple(gt),
                )
            )
    if not records:
        raise ManifestError(f"empty manifest: no usable records in {path}")
    return (
        DatasetManifest(
            name=path.stem,
            records=tuple(records),
            provenance=f"imported from {path} ({skipped} records skipped)",
        ),
        skipped,
    )


def sample_size(n_total: int) -> int:
    """Review-subset size: a tenth of the dataset, capped at 1000, at least 1."""
    if n_total <= 0:
        raise ValueError("empty dataset")
    return max(1, min(SAMPLE_CAP, int(n_total * SAMPLE_FRACTION)))


def sample(manifest: DatasetManifest, seed: int) -> DatasetManifest:
    """Draw a reproducible random subset of sample_size(len) records."""
    k = sample_size(len(manifest))
    rng = random.Random(seed)
    chosen = rng.sample(list(manifest.records), k)
    return DatasetManifest(
        name=manifest.name,
        records=tuple(chosen),
        provenance=f"sample of {k}/{len(manifest)} from {manifest.name!r} (seed={seed})",
    )


@dataclass(frozen=True)
class AuditEntry:
    record_id: str
    box_index: int
    violation: str
    box: BBox

    def to_json_dict(self) -> dict:
        return {
            "id": self.record_id,
            "box_index": self.box_index,
            "violation": self.violation,
            "box": self.box.as_list(),
        }


@dataclass(frozen=True)
class AuditReport:
    entries: tuple[AuditEntry, ...]
    boxes_audited: int
    boxes_outside: int

    def __post_init__(self):
        if self.boxes_outside > self.boxes_audited:
            raise ValueError("boxes_outside cannot exceed boxes_audited")

    def counts_by_violation(self) -> dict[str, int]:
        out = {VIOLATION_NEGATIVE: 0, VIOLATION_WIDTH: 0, VIOLATION_HEIGHT: 0}
        for e in self.entries:
            out[e.violation] += 1
        return out

    def to_json_dict(self) -> dict:
        return {
            "entries": [e.to_json_dict() for e in self.entries],
            "boxes_audited": self.boxes_audited,
            "boxes_outside": self.boxes_outside,
            "counts_by_violation": self.counts_by_violation(),
        }


def box_violations(box: BBox, width: float, height: float) -> list[str]:
    out = []
    if min(box.x1, box.y1, box.x2, box.y2) < 0:
        out.append(VIOLATION_NEGATIVE)
    if box.x2 > width:
        out.append(VIOLATION_WIDTH)
    if box.y2 > height:
        out.append(VIOLATION_HEIGHT)
    return out


def audit_out_of_bounds(manifest: DatasetManifest) -> AuditReport:
    """Flag every counted ground-truth box that leaves its image frame.

    A box contributes one entry per violation kind, so a single box can
    appear up to three times. Ignore regions are not audited.
    """
    entries: list[AuditEntry] = []
    audited = 0
    outside = 0
    for rec in manifest.records:
        for idx, g in enumerate(rec.gt_boxes):
            if g.is_ignore:
                continue
            audited += 1
            violations = box_violations(g.box, rec.width, rec.height)
            if violations:
                outside += 1
            entries.extend(
                AuditEntry(record_id=rec.id, box_index=idx, violation=v, box=g.box)
                for v in violations
            )
    return AuditReport(entries=tuple(entries), boxes_audited=audited, boxes_outside=outside)


@dataclass(frozen=True)
class RelabelSummary:
    boxes_total: int
    boxes_changed: int
    boxes_dropped: int

    def to_json_dict(self) -> dict:
        return {
            "boxes_total": self.boxes_total,
            "boxes_changed": self.boxes_changed,
            "boxes_dropped": self.boxes_dropped,
        }


def relabel(manifest: DatasetManifest) -> tuple[DatasetManifest, RelabelSummary]:
    """Clamp every ground-truth box into its image frame.

    Boxes that collapse to zero area (annotations entirely outside the
    frame) cannot supervise detection and are dropped; the count is
    surfaced in the summary for expert review. Idempotent.
    """
    total = changed = dropped = 0
    new_records: list[ImageRecord] = []
    for rec in manifest.records:
        kept: list[GroundTruthBox] = []
        for g in rec.gt_boxes:
            total += 1
            clamped = clamp_box(g.box, rec.width, rec.height)
            if clamped.area == 0.0:
                dropped += 1
                continue
            if clamped != g.box:
                changed += 1
            kept.append(replace(g, box=clamped))
        new_records.append(replace(rec, gt_boxes=tuple(kept)))
    summary = RelabelSummary(boxes_total=total, boxes_changed=changed, boxes_dropped=dropped)
    out = DatasetManifest(
        name=manifest.name,
        records=tuple(new_records),
        provenance=(
            f"relabel of {manifest.name!r}: {changed} clamped, {dropped} dropped"
        ),
    )
    return out, summary


@dataclass(frozen=True)
class Padding:
    """Border growth in pixels, in (top, left, right, bottom) order."""

    top: int
    left: int
    right: int
    bottom: int

    def __post_init__(self):
        if min(self.top, self.left, self.right, self.bottom) < 0:
            raise ValueError(f"padding must be non-negative, got {self}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.top, self.left, self.right, self.bottom)


DEFAULT_PAD_FILL = 128  # neutral mid-gray border


def padded_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(f"{p.stem}_padded{p.suffix}")


def pad_image(
    record: ImageRecord,
    pad: Padding,
    fill: int = DEFAULT_PAD_FILL,
    out_dir: str | Path | None = None,
) -> ImageRecord:
    """Grow an image by a filled border, translating its boxes with it.

    The padded image is written beside the original with a "_padded"
    suffix — or into out_dir, keeping the suffixed basename — and the
    returned record points at it.
    """
    image = imgio.load_image(record.path)
    h, w = image.shape[:2]
    if h == 0 or w == 0:
        raise ValueError(f"zero-size source image: {record.path}")
    canvas = np.full(
        (h + pad.top + pad.bottom, w + pad.left + pad.right, 3), fill, dtype=np.uint8
    )
    canvas[pad.top : pad.top + h, pad.left : pad.left + w] = image
    out_path = padded_path(record.path)
    if out_dir is not None:
        out_path = Path(out_dir) / out_path.name
        out_path.parent.mkdir(parents=True, exist_ok=True)
    imgio.save_image(canvas, out_path)
    return ImageRecord(
        id=record.id,
        path=os.path.abspath(out_path),
        width=w + pad.left + pad.right,
        height=h + pad.top + pad.bottom,
        gt_boxes=tuple(
            replace(g, box=g.box.translate(pad.left, pad.top)) for g in record.gt_boxes
        ),
    )


def pad_manifest(
    manifest: DatasetManifest,
    pad: Padding,
    fill: int = DEFAULT_PAD_FILL,
    out_dir: str | Path | None = None,
) -> DatasetManifest:
    records = tuple(pad_image(rec, pad, fill, out_dir=out_dir) for rec in manifest.records)
    return DatasetManifest(
        name=manifest.name,
        records=records,
        provenance=f"pad {pad.as_tuple()} fill={fill} of {manifest.name!r}",
    )
