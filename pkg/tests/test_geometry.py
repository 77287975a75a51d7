import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detlens.geometry import BBox, Detection, box_inside, clamp_box, iou


def raster_iou(a: BBox, b: BBox, size: int = 120) -> float:
    """Pixel-counting IoU oracle for integer-coordinate boxes.

    Paints each box onto a unit-pixel grid and counts cells. Exact for
    integer coordinates that fit the grid, so it is an independent
    reference for the closed-form implementation.
    """
    grid_a = np.zeros((size, size), dtype=bool)
    grid_b = np.zeros((size, size), dtype=bool)
    grid_a[int(a.y1) : int(a.y2), int(a.x1) : int(a.x2)] = True
    grid_b[int(b.y1) : int(b.y2), int(b.x1) : int(b.x2)] = True
    inter = np.logical_and(grid_a, grid_b).sum()
    union = np.logical_or(grid_a, grid_b).sum()
    if union == 0:
        return 0.0
    return float(inter) / float(union)


def random_int_box(rng: np.random.Generator, hi: int = 100) -> BBox:
    x1, x2 = sorted(rng.integers(0, hi + 1, size=2).tolist())
    y1, y2 = sorted(rng.integers(0, hi + 1, size=2).tolist())
    return BBox(x1, y1, x2, y2)


class TestBBox:
    def test_coercion_and_props(self):
        b = BBox(1, 2, 4, 8)
        assert isinstance(b.x1, float)
        assert b.width == 3 and b.height == 6 and b.area == 18

    def test_inverted_rejected(self):
        with pytest.raises(ValueError, match="inverted"):
            BBox(5, 0, 4, 10)
        with pytest.raises(ValueError, match="inverted"):
            BBox(0, 5, 10, 4)

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_nonfinite_rejected(self, bad):
        with pytest.raises(ValueError, match="non-finite"):
            BBox(0, 0, bad, 10)

    def test_from_list_roundtrip(self):
        b = BBox.from_list([1.5, 2.0, 3.25, 9.0])
        assert b.as_list() == [1.5, 2.0, 3.25, 9.0]
        with pytest.raises(ValueError):
            BBox.from_list([1, 2, 3])


class TestDetection:
    def test_objectness_range(self):
        with pytest.raises(ValueError):
            Detection(BBox(0, 0, 1, 1), objectness=1.5)
        with pytest.raises(ValueError):
            Detection(BBox(0, 0, 1, 1), objectness=-0.1)

    def test_class_probs_optional_and_validated(self):
        d = Detection(BBox(0, 0, 1, 1), objectness=0.5)
        assert d.class_probs is None
        d2 = Detection(BBox(0, 0, 1, 1), objectness=0.5, class_probs=[0.2, 0.8])
        assert d2.class_probs == (0.2, 0.8)
        with pytest.raises(ValueError):
            Detection(BBox(0, 0, 1, 1), objectness=0.5, class_probs=[1.2])


class TestIou:
    def test_identical(self):
        assert iou(BBox(0, 0, 10, 10), BBox(0, 0, 10, 10)) == 1.0

    def test_disjoint(self):
        assert iou(BBox(0, 0, 10, 10), BBox(20, 20, 30, 30)) == 0.0

    def test_half_shift(self):
        # intersection 50, union 150 -> 1/3 (agrees with raster_iou)
        a, b = BBox(0, 0, 10, 10), BBox(5, 0, 15, 10)
        assert iou(a, b) == pytest.approx(1 / 3, abs=1e-12)
        assert raster_iou(a, b) == pytest.approx(1 / 3, abs=1e-12)

    def test_zero_area_pair(self):
        assert iou(BBox(3, 3, 3, 3), BBox(3, 3, 3, 3)) == 0.0

    def test_matches_raster_oracle(self):
        rng = np.random.default_rng(1234)
        for _ in range(500):
            a = random_int_box(rng)
            b = random_int_box(rng)
            assert iou(a, b) == pytest.approx(raster_iou(a, b), abs=1e-9)

    def test_symmetry_bulk(self):
        rng = np.random.default_rng(99)
        for _ in range(10_000):
            a = random_int_box(rng, hi=50)
            b = random_int_box(rng, hi=50)
            assert iou(a, b) == iou(b, a)

    @given(
        x1=st.floats(-500, 500),
        y1=st.floats(-500, 500),
        w=st.floats(0.001, 500),
        h=st.floats(0.001, 500),
    )
    def test_self_iou_is_one(self, x1, y1, w, h):
        b = BBox(x1, y1, x1 + w, y1 + h)
        assert iou(b, b) == pytest.approx(1.0, abs=1e-12)


# Out-of-bounds annotations from one crowded 1280x960 frame; all but the
# sixth spill over at least one edge.
OOB_FRAME_BOXES = [
    (-50, 35, 531, 131),
    (-12, 87, 451, 1325),
    (308, 292, 635, 1228),
    (499, 171, 988, 1201),
    (618, 370, 1034, 1243),
    (608, 61, 758, 444),
    (318, -14, 673, 745),
    (303, -3, 444, 437),
]


class TestClampBox:
    def test_negative_left_and_tall(self):
        assert clamp_box(BBox(-12, 87, 451, 1325), 1280, 960) == BBox(0, 87, 451, 960)

    def test_already_inside_unchanged(self):
        b = BBox(608, 61, 758, 444)
        assert clamp_box(b, 1280, 960) == b

    def test_negative_left(self):
        assert clamp_box(BBox(-50, 35, 531, 131), 1280, 960) == BBox(0, 35, 531, 131)

    def test_fully_outside_degenerates(self):
        out = clamp_box(BBox(-10, -10, -1, -1), 100, 100)
        assert out == BBox(0, 0, 0, 0)
        assert out.area == 0.0

    def test_bad_dims(self):
        with pytest.raises(ValueError):
            clamp_box(BBox(0, 0, 1, 1), 0, 10)

    @given(
        x1=st.floats(-2000, 2000),
        y1=st.floats(-2000, 2000),
        w=st.floats(0, 2000),
        h=st.floats(0, 2000),
        img_w=st.integers(1, 1920),
        img_h=st.integers(1, 1920),
    )
    @settings(max_examples=300)
    def test_idempotent_and_inside(self, x1, y1, w, h, img_w, img_h):
        b = BBox(x1, y1, x1 + w, y1 + h)
        once = clamp_box(b, img_w, img_h)
        assert clamp_box(once, img_w, img_h) == once
        assert box_inside(once, img_w, img_h)


class TestBoxInside:
    def test_inside(self):
        assert box_inside(BBox(608, 61, 758, 444), 1280, 960)

    def test_negative_left(self):
        assert not box_inside(BBox(-50, 35, 531, 131), 1280, 960)

    def test_bottom_overflow(self):
        assert not box_inside(BBox(499, 171, 988, 1201), 1280, 960)

    def test_oob_frame_pattern(self):
        # exactly the sixth box of the fixture frame is inside
        flags = [box_inside(BBox(*c), 1280, 960) for c in OOB_FRAME_BOXES]
        assert flags == [False, False, False, False, False, True, False, False]
