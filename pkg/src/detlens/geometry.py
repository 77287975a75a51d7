"""Box geometry primitives shared by every other module.

Boxes live in pixel space, corner form: x grows rightward, y grows
downward, and (x1, y1) is the top-left corner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box with real-valued corner coordinates."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        object.__setattr__(self, "x1", float(self.x1))
        object.__setattr__(self, "y1", float(self.y1))
        object.__setattr__(self, "x2", float(self.x2))
        object.__setattr__(self, "y2", float(self.y2))
        for name in ("x1", "y1", "x2", "y2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite coordinate {name}={getattr(self, name)!r}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(
                f"inverted box: ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def translate(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @classmethod
    def from_list(cls, coords: Sequence[float]) -> "BBox":
        if len(coords) != 4:
            raise ValueError(f"expected 4 coordinates, got {len(coords)}")
        return cls(*coords)


@dataclass(frozen=True)
class Detection:
    """A detector output: box plus confidence scores.

    class_probs may be absent for single-class detectors.
    """

    box: BBox
    objectness: float
    class_probs: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if not (0.0 <= self.objectness <= 1.0):
            raise ValueError(f"objectness {self.objectness} outside [0, 1]")
        if self.class_probs is not None:
            object.__setattr__(self, "class_probs", tuple(float(p) for p in self.class_probs))
            for p in self.class_probs:
                if not (0.0 <= p <= 1.0):
                    raise ValueError(f"class probability {p} outside [0, 1]")


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0.0 when the union is empty."""
    ix1 = max(a.x1, b.x1)
    iy1 = max(a.y1, b.y1)
    ix2 = min(a.x2, b.x2)
    iy2 = min(a.y2, b.y2)
    inter = max(0.0, ix2 - ix1) * max(0.0, iy2 - iy1)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def clamp_box(b: BBox, w: float, h: float) -> BBox:
    """Constrain a box into the image rectangle [0, w] x [0, h].

    Each coordinate is clamped independently, so a box entirely outside
    the image collapses to a zero-area box on the boundary; callers
    detect that case via `.area == 0`. Idempotent.
    """
    if w <= 0 or h <= 0:
        raise ValueError(f"image dimensions must be positive, got ({w}, {h})")
    return BBox(
        min(w, max(0.0, b.x1)),
        min(h, max(0.0, b.y1)),
        min(w, max(0.0, b.x2)),
        min(h, max(0.0, b.y2)),
    )


def box_inside(b: BBox, w: float, h: float) -> bool:
    """True iff the box lies fully inside the image rectangle [0, w] x [0, h]."""
    if w <= 0 or h <= 0:
        raise ValueError(f"image dimensions must be positive, got ({w}, {h})")
    return b.x1 >= 0 and b.y1 >= 0 and b.x2 <= w and b.y2 <= h
