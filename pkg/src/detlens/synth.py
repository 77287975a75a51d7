"""Self-contained demo dataset: small synthetic scenes with known failures.

Fifty 96x72 images with bright "person" rectangles over a noisy background,
a ground-truth manifest (a few boxes deliberately poke out of frame), and a
beliefs manifest for the mock detector that disagrees with the ground truth
in controlled ways — per image the mock will under-detect, over-detect,
mislocalize, or agree. That gives the full pipeline something honest to
find: every failure category occurs, the audit flags real out-of-bounds
labels, and relabeling fixes them.

The disagreement pattern is keyed on the image index so a pipeline run over
the default 10% sample (seed 11) still sees every category and at least one
out-of-bounds label.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import (
    TAG_PERSON,
    DatasetManifest,
    GroundTruthBox,
    ImageRecord,
    save_manifest,
)
from .geometry import BBox, clamp_box
from .imgio import save_image

WIDTH = 96
HEIGHT = 72

DEFAULT_COUNT = 50
DEFAULT_LAYOUT_SEED = 7
DEFAULT_VISIBILITY_THRESHOLD = 0.5

# The extra box the mock hallucinates on over-detection images. Fully in
# frame and horizontally disjoint from any primary box (those end by x=63).
_EXTRA_BELIEF = BBox(70, 46, 90, 68)


@dataclass(frozen=True)
class FixturePaths:
    root: Path
    images_dir: Path
    manifest: Path
    beliefs: Path
    detector_config: Path


def _plan(index: int) -> str:
    """Failure category an image is built to produce.

    Index 35 is forced to under-detection so the seed-11 sample of the
    50-image set covers all four categories.
    """
    if index == 35:
        return "under"
    r = index % 10
    if r <= 5:
        return "correct"
    if r <= 7:
        return "under"
    if r == 8:
        return "over"
    return "mis"


def _primary_box(rng: np.random.Generator) -> BBox:
    x1 = int(rng.integers(4, 36))
    y1 = int(rng.integers(4, 26))
    w = int(rng.integers(16, 28))
    h = int(rng.integers(20, 32))
    return BBox(x1, y1, x1 + w, y1 + h)


def _secondary_box(rng: np.random.Generator) -> BBox:
    x1 = int(rng.integers(64, 75))
    y1 = int(rng.integers(30, 41))
    w = int(rng.integers(12, 21))
    h = int(rng.integers(16, 28))
    return BBox(x1, y1, x1 + w, y1 + h)


def _boxes_for(index: int, kind: str, rng: np.random.Generator):
    """Ground-truth boxes and the mock's belief boxes for one image."""
    primary = _primary_box(rng)
    if kind == "correct":
        gt = [primary]
        if rng.random() < 0.5:
            gt.append(_secondary_box(rng))
        if index % 3 == 2:
            # poke the primary box past the left edge by <= 20% of its width
            b = gt[0]
            overshoot = max(1, round(0.15 * b.width))
            gt[0] = BBox(-overshoot, b.y1, b.width - overshoot, b.y2)
        elif index % 6 == 4:
            # past the bottom edge by <= 20% of its height
            b = gt[0]
            overshoot = max(1, round(0.15 * b.height))
            gt[0] = BBox(b.x1, HEIGHT - b.height + overshoot, b.x2, HEIGHT + overshoot)
        beliefs = [clamp_box(b, WIDTH, HEIGHT) for b in gt]
    elif kind == "under":
        gt = [primary, _secondary_box(rng)]
        beliefs = [clamp_box(gt[1], WIDTH, HEIGHT)]  # the model misses the first
    elif kind == "over":
        gt = [primary]
        beliefs = [clamp_box(primary, WIDTH, HEIGHT), _EXTRA_BELIEF]
    else:  # mis: shifted by half a width, IoU ~ 1/3 — matched but badly
        gt = [primary]
        shift = round(0.5 * primary.width)
        beliefs = [primary.translate(shift, 0)]
    return gt, beliefs


def _render(gt, beliefs, kind: str, rng: np.random.Generator) -> np.ndarray:
    image = rng.integers(40, 90, (HEIGHT, WIDTH, 3)).astype(np.uint8)
    for box in gt:
        x1 = max(0, int(round(box.x1)))
        y1 = max(0, int(round(box.y1)))
        x2 = min(WIDTH, int(round(box.x2)))
        y2 = min(HEIGHT, int(round(box.y2)))
        shade = int(rng.integers(190, 240))
        image[y1:y2, x1:x2] = (shade, shade - 20, shade - 30)
    if kind == "over":
        # something person-ish where the mock hallucinates
        b = _EXTRA_BELIEF
        image[int(b.y1):int(b.y2), int(b.x1):int(b.x2)] = (150, 140, 135)
    return image


def generate_fixture(
    root: str | Path,
    count: int = DEFAULT_COUNT,
    seed: int = DEFAULT_LAYOUT_SEED,
) -> FixturePaths:
    """Write the demo dataset under `root`; returns the paths bundle."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    root = Path(root)
    images_dir = root / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    records = []
    belief_records = []
    for i in range(count):
        image_id = f"img_{i:02d}"
        kind = _plan(i)
        gt, beliefs = _boxes_for(i, kind, rng)
        save_image(_render(gt, beliefs, kind, rng), images_dir / f"{image_id}.png")
        # Paths are stored relative to the manifests (which sit next to
        # images/) so the whole fixture directory can be moved around.
        rel_path = f"images/{image_id}.png"
        records.append(
            ImageRecord(
                id=image_id,
                path=rel_path,
                width=WIDTH,
                height=HEIGHT,
                gt_boxes=tuple(GroundTruthBox(box=b, tag=TAG_PERSON) for b in gt),
            )
        )
        belief_records.append(
            ImageRecord(
                id=image_id,
                path=rel_path,
                width=WIDTH,
                height=HEIGHT,
                gt_boxes=tuple(GroundTruthBox(box=b, tag=TAG_PERSON) for b in beliefs),
            )
        )

    manifest_path = root / "manifest.jsonl"
    beliefs_path = root / "beliefs.jsonl"
    save_manifest(DatasetManifest(name="synth-demo", records=tuple(records)), manifest_path)
    save_manifest(
        DatasetManifest(name="synth-beliefs", records=tuple(belief_records)), beliefs_path
    )
    detector_config = root / "detector.json"
    with open(detector_config, "w") as fh:
        json.dump(
            {
                "kind": "mock",
                "manifest": "beliefs.jsonl",
                "visibility_threshold": DEFAULT_VISIBILITY_THRESHOLD,
                "score_threshold": 0.5,
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    return FixturePaths(
        root=root,
        images_dir=images_dir,
        manifest=manifest_path,
        beliefs=beliefs_path,
        detector_config=detector_config,
    )
