"""Prediction-vs-ground-truth analysis.

Matches predicted boxes one-to-one with ground-truth boxes, assigns each
image a failure category, aggregates counts into statistics, and diffs
two sets of statistics.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from detlens.geometry import BBox, Detection

IOU_MATCH_THRESHOLD = 0.5

# Tolerance for "totals are equal" when canonicalizing assignments.
# Sums of at most a few hundred IoU terms carry ~1e-15 float noise.
_TOTAL_TOL = 1e-12


class Category(enum.Enum):
    UNDER_DETECTION = "UnderDetection"
    OVER_DETECTION = "OverDetection"
    CORRECT_LOCALIZATION = "CorrectLocalization"
    MISLOCALIZATION = "Mislocalization"

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]


_DISPLAY_NAMES = {
    Category.UNDER_DETECTION: "Under-detection",
    Category.OVER_DETECTION: "Over-detection",
    Category.CORRECT_LOCALIZATION: "Correct Localization",
    Category.MISLOCALIZATION: "Mislocalization",
}

# Lower counts are better for every failure category; higher is better
# for correct localization.
HIGHER_IS_BETTER = {
    Category.UNDER_DETECTION: False,
    Category.OVER_DETECTION: False,
    Category.CORRECT_LOCALIZATION: True,
    Category.MISLOCALIZATION: False,
}

CATEGORY_ORDER = (
    Category.UNDER_DETECTION,
    Category.OVER_DETECTION,
    Category.CORRECT_LOCALIZATION,
    Category.MISLOCALIZATION,
)


@dataclass(frozen=True)
class Matching:
    """One-to-one box assignment: (pred index, gt index, iou) pairs plus leftovers."""

    pairs: tuple[tuple[int, int, float], ...]
    unmatched_preds: tuple[int, ...]
    unmatched_gts: tuple[int, ...]

    @property
    def total_iou(self) -> float:
        return sum(p[2] for p in self.pairs)

    def to_json_dict(self) -> dict:
        return {
            "pairs": [[i, j, v] for i, j, v in self.pairs],
            "unmatched_preds": list(self.unmatched_preds),
            "unmatched_gts": list(self.unmatched_gts),
        }


def iou_matrix(preds: Sequence[BBox], gts: Sequence[BBox]) -> np.ndarray:
    """Pairwise IoU, preds along rows, gts along columns."""
    n, m = len(preds), len(gts)
    out = np.zeros((n, m), dtype=np.float64)
    if n == 0 or m == 0:
        return out
    pa = np.array([b.as_list() for b in preds], dtype=np.float64)
    ga = np.array([b.as_list() for b in gts], dtype=np.float64)
    lt = np.maximum(pa[:, None, :2], ga[None, :, :2])
    rb = np.minimum(pa[:, None, 2:], ga[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[:, :, 0] * wh[:, :, 1]
    area_p = (pa[:, 2] - pa[:, 0]) * (pa[:, 3] - pa[:, 1])
    area_g = (ga[:, 2] - ga[:, 0]) * (ga[:, 3] - ga[:, 1])
    union = area_p[:, None] + area_g[None, :] - inter
    np.divide(inter, union, out=out, where=union > 0)
    return out


def _optimal_total(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(matrix, maximize=True)
    return float(matrix[rows, cols].sum())


def match_boxes(preds: Sequence[BBox], gts: Sequence[BBox]) -> Matching:
    """One-to-one assignment maximizing total IoU over all assignments.

    Among assignments with equal total IoU, the one whose pair set is
    lexicographically smallest by (pred index, gt index) is returned, so
    equal inputs always produce identical output. Pairs with IoU 0 are
    discarded to the unmatched lists.
    """
    n, m = len(preds), len(gts)
    matrix = iou_matrix(preds, gts)
    best_total = _optimal_total(matrix)

    # Fix pairs greedily in (pred, gt) order, keeping a pair only when
    # some completion of the already-fixed set still reaches the optimal
    # total. This pins down the lexicographically smallest optimum.
    fixed: list[tuple[int, int, float]] = []
    used_cols: set[int] = set()
    fixed_total = 0.0
    free_rows = list(range(n))
    for i in range(n):
        for j in range(m):
            if j in used_cols or matrix[i, j] <= 0.0:
                continue
            rows = [r for r in free_rows if r != i]
            cols = [c for c in range(m) if c not in used_cols and c != j]
            rest = _optimal_total(matrix[np.ix_(rows, cols)])
            if fixed_total + matrix[i, j] + rest >= best_total - _TOTAL_TOL:
                fixed.append((i, j, float(matrix[i, j])))
                used_cols.add(j)
                fixed_total += matrix[i, j]
                free_rows.remove(i)
                break

    matched_rows = {i for i, _, _ in fixed}
    return Matching(
        pairs=tuple(fixed),
        unmatched_preds=tuple(i for i in range(n) if i not in matched_rows),
        unmatched_gts=tuple(j for j in range(m) if j not in used_cols),
    )


def categorize(preds: Sequence[Detection], gt_boxes: Sequence[BBox]) -> Category:
    """Assign the image-level category for one image.

    Callers must exclude ignore-region ground truth beforehand. Count
    mismatches decide under/over-detection; with equal counts the image
    is correctly localized iff every box is matched at IoU >= 0.5. An
    image with no predictions and no ground truth counts as correct
    (vacuously: there is nothing to mislocate).
    """
    n, m = len(preds), len(gt_boxes)
    if n < m:
        return Category.UNDER_DETECTION
    if n > m:
        return Category.OVER_DETECTION
    matching = match_boxes([d.box for d in preds], list(gt_boxes))
    if len(matching.pairs) == m and all(v >= IOU_MATCH_THRESHOLD for _, _, v in matching.pairs):
        return Category.CORRECT_LOCALIZATION
    return Category.MISLOCALIZATION


@dataclass(frozen=True)
class CategoryStats:
    counts: dict[Category, int]
    total: int

    def __post_init__(self):
        if self.total <= 0:
            raise ValueError("empty category list")
        missing = [c for c in Category if c not in self.counts]
        if missing:
            raise ValueError(f"missing categories: {missing}")
        if sum(self.counts.values()) != self.total:
            raise ValueError("category counts do not sum to total")

    @property
    def percentages(self) -> dict[Category, float]:
        return {c: 100.0 * n / self.total for c, n in self.counts.items()}

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "counts": {c.value: self.counts[c] for c in CATEGORY_ORDER},
            "percentages": {c.value: self.percentages[c] for c in CATEGORY_ORDER},
        }

    @classmethod
    def from_counts(cls, under: int, over: int, correct: int, mis: int) -> "CategoryStats":
        counts = {
            Category.UNDER_DETECTION: under,
            Category.OVER_DETECTION: over,
            Category.CORRECT_LOCALIZATION: correct,
            Category.MISLOCALIZATION: mis,
        }
        return cls(counts=counts, total=sum(counts.values()))

    @classmethod
    def from_json_dict(cls, obj: dict) -> "CategoryStats":
        counts = {Category(k): int(v) for k, v in obj["counts"].items()}
        return cls(counts=counts, total=int(obj["total"]))


def summarize(categories: Sequence[tuple[str, Category]]) -> CategoryStats:
    """Aggregate per-image categories into counts and percentages."""
    if not categories:
        raise ValueError("empty category list")
    counts = {c: 0 for c in Category}
    for _, cat in categories:
        counts[cat] += 1
    return CategoryStats(counts=counts, total=len(categories))


@dataclass(frozen=True)
class ComparisonRow:
    category: Category
    base: int
    target: int
    higher_is_better: bool

    @property
    def delta(self) -> int:
        return self.target - self.base

    @property
    def better(self) -> str:
        """Which side wins this row: 'base', 'target', or 'tie'."""
        if self.delta == 0:
            return "tie"
        improved = self.delta > 0 if self.higher_is_better else self.delta < 0
        return "target" if improved else "base"

    def to_json_dict(self) -> dict:
        return {
            "category": self.category.value,
            "base": self.base,
            "target": self.target,
            "delta": self.delta,
            "higher_is_better": self.higher_is_better,
            "better": self.better,
        }


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[ComparisonRow, ...]
    total: int

    def row(self, category: Category) -> ComparisonRow:
        for r in self.rows:
            if r.category == category:
                return r
        raise KeyError(category)

    def to_json_dict(self) -> dict:
        return {"total": self.total, "rows": [r.to_json_dict() for r in self.rows]}


def compare_stats(base: CategoryStats, target: CategoryStats) -> ComparisonTable:
    """Per-category deltas between two runs over the same image count."""
    if base.total != target.total:
        raise ValueError(
            f"cannot compare stats over different totals ({base.total} vs {target.total})"
        )
    rows = tuple(
        ComparisonRow(
            category=c,
            base=base.counts[c],
            target=target.counts[c],
            higher_is_better=HIGHER_IS_BETTER[c],
        )
        for c in CATEGORY_ORDER
    )
    return ComparisonTable(rows=rows, total=base.total)
