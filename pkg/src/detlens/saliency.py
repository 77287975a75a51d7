"""Black-box saliency for a single target box.

The recipe: sample N binary occlusion grids, upsample them to soft masks,
multiply each into the image, ask the detector what it still sees, and weight
each mask by how well the best surviving proposal matches the target. The
weighted sum of masks is the saliency map — regions whose occlusion kills the
detection end up dark, regions that keep it alive end up hot. No gradients,
no model internals: any backend the adapter layer can reach can be explained.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from matplotlib import colormaps

from .detector import DetectorAdapter, RetryableDetectorError
from .geometry import BBox, Detection, box_inside, iou

DEFAULT_NUM_MASKS = 5000
DEFAULT_GRID_SIZE = 16
DEFAULT_KEEP_PROBABILITY = 0.5

_FILL_MODES = ("black", "mean")

# Fraction of skipped perturbation samples above which a map is flagged as
# unreliable in its sidecar (the run still completes).
SKIP_FLAG_FRACTION = 0.01


class SaliencyError(Exception):
    pass


@dataclass(frozen=True)
class MaskSpec:
    """Parameters of the random occlusion masks."""

    grid_size: int = DEFAULT_GRID_SIZE
    keep_probability: float = DEFAULT_KEEP_PROBABILITY
    num_masks: int = DEFAULT_NUM_MASKS
    seed: int = 0
    fill: str = "black"

    def __post_init__(self) -> None:
        if self.grid_size < 2:
            raise ValueError(f"grid_size must be >= 2, got {self.grid_size}")
        if not (0.0 < self.keep_probability < 1.0):
            raise ValueError(
                f"keep_probability must be in (0, 1), got {self.keep_probability}"
            )
        if self.num_masks < 1:
            raise ValueError(f"num_masks must be >= 1, got {self.num_masks}")
        if self.fill not in _FILL_MODES:
            raise ValueError(f"fill must be one of {_FILL_MODES}, got {self.fill!r}")

    def to_json_dict(self) -> dict:
        return {
            "grid_size": self.grid_size,
            "keep_probability": self.keep_probability,
            "num_masks": self.num_masks,
            "seed": self.seed,
            "fill": self.fill,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "MaskSpec":
        return cls(**data)


class _Upsampler:
    """Bilinear upsampling with precomputed index/weight tables.

    Half-pixel convention: output pixel i samples source coordinate
    (i + 0.5) * scale - 0.5, edges replicated. Tables are built once per
    (grid, output) geometry since every mask of a run shares it.
    """

    def __init__(self, src_h: int, src_w: int, out_h: int, out_w: int):
        self._y0, self._y1, self._wy = self._axis(src_h, out_h)
        self._x0, self._x1, self._wx = self._axis(src_w, out_w)

    @staticmethod
    def _axis(src: int, out: int):
        pos = (np.arange(out) + 0.5) * (src / out) - 0.5
        i0 = np.clip(np.floor(pos).astype(int), 0, src - 1)
        i1 = np.minimum(i0 + 1, src - 1)
        frac = np.clip(pos - i0, 0.0, 1.0)
        return i0, i1, frac

    def apply(self, grid: np.ndarray) -> np.ndarray:
        wx, wy = self._wx, self._wy[:, None]
        top = grid[np.ix_(self._y0, self._x0)] * (1 - wx) + grid[np.ix_(self._y0, self._x1)] * wx
        bottom = grid[np.ix_(self._y1, self._x0)] * (1 - wx) + grid[np.ix_(self._y1, self._x1)] * wx
        return top * (1 - wy) + bottom * wy


def _bilinear_upsample(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    return _Upsampler(grid.shape[0], grid.shape[1], out_h, out_w).apply(grid)


def generate_masks(spec: MaskSpec, width: int, height: int) -> Iterator[np.ndarray]:
    """Yield the run's N soft masks (height x width float64 in [0, 1]).

    Each mask is an s x s Bernoulli(keep_probability) grid, bilinearly
    upsampled to (s+1) cells of ceil(dim/s) pixels, then cropped at a
    uniformly random sub-cell offset so cell boundaries don't pin to fixed
    image coordinates. Streaming generator: a full run's masks would not fit
    in memory at native resolutions.
    """
    if width <= 0 or height <= 0:
        raise ValueError(f"image dimensions must be positive, got {width}x{height}")
    s = spec.grid_size
    cell_w = math.ceil(width / s)
    cell_h = math.ceil(height / s)
    up = _Upsampler(s, s, (s + 1) * cell_h, (s + 1) * cell_w)
    rng = np.random.default_rng(spec.seed)
    for _ in range(spec.num_masks):
        grid = (rng.random((s, s)) < spec.keep_probability).astype(np.float64)
        dx = int(rng.integers(0, cell_w))
        dy = int(rng.integers(0, cell_h))
        yield up.apply(grid)[dy : dy + height, dx : dx + width]


def apply_mask(image: np.ndarray, mask: np.ndarray, fill: str = "black") -> np.ndarray:
    """Perturb an image by a [0, 1] mask; returns a uint8 image.

    "black" multiplies intensities toward zero; "mean" fades them toward the
    image's per-channel mean instead.
    """
    if mask.shape != image.shape[:2]:
        raise ValueError(
            f"mask dimensions {mask.shape} do not match image {image.shape[:2]}"
        )
    weights = mask[..., None] if image.ndim == 3 else mask
    pixels = image.astype(np.float64)
    if fill == "black":
        out = pixels * weights
    elif fill == "mean":
        axis = (0, 1)
        out = pixels * weights + pixels.mean(axis=axis) * (1.0 - weights)
    else:
        raise ValueError(f"fill must be one of {_FILL_MODES}, got {fill!r}")
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _cosine(u: Sequence[float], v: Sequence[float]) -> float:
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    denom = float(np.linalg.norm(a) * np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.dot(a, b) / denom)


def detection_similarity(target: Detection, proposal: Detection) -> float:
    """How much a proposal looks like the target: IoU x class cosine x
    objectness. The cosine term is 1 when either side carries no class
    distribution (single-class detectors)."""
    overlap = iou(target.box, proposal.box)
    if overlap == 0.0:
        return 0.0
    if target.class_probs is None or proposal.class_probs is None:
        cos = 1.0
    else:
        cos = _cosine(target.class_probs, proposal.class_probs)
    return overlap * cos * proposal.objectness


@dataclass
class SaliencyMap:
    """Raw (pre-normalization) saliency accumulator plus its provenance."""

    width: int
    height: int
    values: np.ndarray
    target: Detection
    spec: MaskSpec
    skipped_samples: int = 0

    def __post_init__(self) -> None:
        if self.values.shape != (self.height, self.width):
            raise ValueError(
                f"value grid {self.values.shape} does not match "
                f"{self.width}x{self.height} image"
            )

    def normalized(self) -> np.ndarray:
        """Min-max normalize to [0, 1]. A constant map (no signal to rank)
        normalizes to all zeros by convention."""
        lo = float(self.values.min())
        hi = float(self.values.max())
        if hi - lo <= 0.0:
            return np.zeros_like(self.values)
        return (self.values - lo) / (hi - lo)

    @property
    def skip_flagged(self) -> bool:
        return self.skipped_samples > SKIP_FLAG_FRACTION * self.spec.num_masks

    def sidecar_dict(self) -> dict:
        target = {
            "box": self.target.box.as_list(),
            "objectness": self.target.objectness,
            "class_probs": list(self.target.class_probs)
            if self.target.class_probs is not None
            else None,
        }
        return {
            "width": self.width,
            "height": self.height,
            "spec": self.spec.to_json_dict(),
            "skipped_samples": self.skipped_samples,
            "skip_flagged": self.skip_flagged,
            "target": target,
        }


def explain(
    image: np.ndarray,
    target: Detection,
    adapter: DetectorAdapter,
    spec: MaskSpec,
    record_id: str,
) -> SaliencyMap:
    """Run the full perturb-detect-accumulate loop for one target box.

    The raw map is sum_i w_i * M_i with w_i the best detection_similarity
    between the target and any proposal the detector returns on the i-th
    perturbed image (0 when it returns none). Samples whose inference fails
    transport-level are skipped and counted, not fatal — unless every single
    one fails. Protocol errors are never swallowed.

    Accumulation is sequential (and bit-reproducible) unless the adapter
    advertises request_parallelism > 1, in which case detector calls overlap
    and the float sum order varies run to run (agreement within ~1e-6).
    """
    height, width = image.shape[:2]
    if not box_inside(target.box, width, height):
        raise ValueError(
            f"target box {target.box.as_list()} exceeds the {width}x{height} "
            "image; clamp it before explaining"
        )
    raw = np.zeros((height, width), dtype=np.float64)
    skipped = 0

    def sample_weight(mask: np.ndarray) -> float | None:
        perturbed = apply_mask(image, mask, spec.fill)
        try:
            proposals = adapter.detect(perturbed, record_id)
        except RetryableDetectorError:
            return None
        if not proposals:
            return 0.0
        return max(detection_similarity(target, d) for d in proposals)

    parallelism = getattr(adapter, "request_parallelism", 1)
    if parallelism <= 1:
        for mask in generate_masks(spec, width, height):
            weight = sample_weight(mask)
            if weight is None:
                skipped += 1
            elif weight > 0.0:
                raw += weight * mask
    else:
        def run(mask: np.ndarray):
            return mask, sample_weight(mask)

        def fold(done_futures) -> None:
            nonlocal skipped
            for future in done_futures:
                mask, weight = future.result()
                if weight is None:
                    skipped += 1
                elif weight > 0.0:
                    raw[:] += weight * mask

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            pending: set = set()
            for mask in generate_masks(spec, width, height):
                if len(pending) >= parallelism:
                    done, pending = wait(pending, return_when=FIRST_COMPLETED)
                    fold(done)
                pending.add(pool.submit(run, mask))
            fold(wait(pending).done)

    if skipped >= spec.num_masks:
        raise SaliencyError(
            f"all {spec.num_masks} perturbation samples failed for {record_id!r}"
        )
    return SaliencyMap(
        width=width,
        height=height,
        values=raw,
        target=target,
        spec=spec,
        skipped_samples=skipped,
    )


# --- persistence -------------------------------------------------------------


def write_raw(smap: SaliencyMap, path: str | Path) -> None:
    """Raw map as row-major little-endian float32."""
    smap.values.astype("<f4").tofile(path)


def read_raw(path: str | Path, width: int, height: int) -> np.ndarray:
    values = np.fromfile(path, dtype="<f4")
    if values.size != width * height:
        raise ValueError(
            f"{path}: expected {width * height} float32 values, found {values.size}"
        )
    return values.reshape(height, width).astype(np.float64)


def write_sidecar(smap: SaliencyMap, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(smap.sidecar_dict(), fh, indent=2)
        fh.write("\n")


# --- rendering ---------------------------------------------------------------


def render_overlay(
    image: np.ndarray,
    smap: SaliencyMap,
    alpha: float = 0.5,
    draw_target: bool = True,
) -> np.ndarray:
    """Blend a jet-ramp heatmap over the source image.

    alpha 0 leaves the image untouched, alpha 1 shows pure ramp colors.
    With draw_target the explained box is outlined in white on top.
    """
    if smap.values.shape != image.shape[:2]:
        raise ValueError(
            f"map dimensions {smap.values.shape} do not match image {image.shape[:2]}"
        )
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    ramp = colormaps["jet"](smap.normalized())[..., :3] * 255.0
    blended = (1.0 - alpha) * image.astype(np.float64) + alpha * ramp
    out = np.clip(np.rint(blended), 0, 255).astype(np.uint8)
    if draw_target:
        _draw_box(out, smap.target.box)
    return out


def _draw_box(
    image: np.ndarray,
    box: BBox,
    color: tuple[int, int, int] = (255, 255, 255),
    thickness: int = 2,
) -> None:
    h, w = image.shape[:2]
    x1 = max(0, int(round(box.x1)))
    y1 = max(0, int(round(box.y1)))
    x2 = min(w, int(round(box.x2)))
    y2 = min(h, int(round(box.y2)))
    if x2 <= x1 or y2 <= y1:
        return
    t = thickness
    image[y1 : min(y1 + t, h), x1:x2] = color
    image[max(y2 - t, 0) : y2, x1:x2] = color
    image[y1:y2, x1 : min(x1 + t, w)] = color
    image[y1:y2, max(x2 - t, 0) : x2] = color
