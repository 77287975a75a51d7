import json

import numpy as np
import pytest
from matplotlib import colormaps
from PIL import Image

from detlens.dataset import DatasetManifest, GroundTruthBox, ImageRecord
from detlens.detector import (
    DetectorAdapter,
    MockDetector,
    MockDetectorSpec,
    ProtocolError,
    RetryableDetectorError,
)
from detlens.geometry import BBox, Detection
from detlens.saliency import (
    MaskSpec,
    SaliencyError,
    SaliencyMap,
    _bilinear_upsample,
    apply_mask,
    detection_similarity,
    explain,
    generate_masks,
    read_raw,
    render_overlay,
    write_raw,
    write_sidecar,
)


def upsample_oracle(grid, out_h, out_w):
    """Scalar bilinear interpolation, half-pixel convention, edge replicate.

    Deliberately loop-based and obvious; the production path must agree.
    """
    src_h, src_w = grid.shape
    out = np.zeros((out_h, out_w))
    for i in range(out_h):
        for j in range(out_w):
            y = (i + 0.5) * src_h / out_h - 0.5
            x = (j + 0.5) * src_w / out_w - 0.5
            y0 = min(max(int(np.floor(y)), 0), src_h - 1)
            x0 = min(max(int(np.floor(x)), 0), src_w - 1)
            y1 = min(y0 + 1, src_h - 1)
            x1 = min(x0 + 1, src_w - 1)
            fy = min(max(y - y0, 0.0), 1.0)
            fx = min(max(x - x0, 0.0), 1.0)
            top = grid[y0, x0] * (1 - fx) + grid[y0, x1] * fx
            bot = grid[y1, x0] * (1 - fx) + grid[y1, x1] * fx
            out[i, j] = top * (1 - fy) + bot * fy
    return out


class TestUpsample:
    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            s = int(rng.integers(2, 7))
            grid = (rng.random((s, s)) < 0.5).astype(np.float64)
            out_h = int(rng.integers(s, 40))
            out_w = int(rng.integers(s, 40))
            fast = _bilinear_upsample(grid, out_h, out_w)
            slow = upsample_oracle(grid, out_h, out_w)
            np.testing.assert_allclose(fast, slow, atol=1e-12)

    def test_constant_grids_stay_constant(self):
        ones = _bilinear_upsample(np.ones((4, 4)), 30, 50)
        zeros = _bilinear_upsample(np.zeros((4, 4)), 30, 50)
        assert (ones == 1.0).all()
        assert (zeros == 0.0).all()

    def test_range_preserved(self):
        rng = np.random.default_rng(9)
        grid = (rng.random((8, 8)) < 0.5).astype(np.float64)
        up = _bilinear_upsample(grid, 100, 70)
        assert up.min() >= 0.0 and up.max() <= 1.0


class TestGenerateMasks:
    def test_shapes_count_and_range(self):
        spec = MaskSpec(grid_size=4, keep_probability=0.5, num_masks=12, seed=1)
        masks = list(generate_masks(spec, width=37, height=23))
        assert len(masks) == 12
        for m in masks:
            assert m.shape == (23, 37)
            assert m.min() >= 0.0 and m.max() <= 1.0

    def test_deterministic_per_seed(self):
        spec = MaskSpec(grid_size=5, keep_probability=0.4, num_masks=6, seed=44)
        a = list(generate_masks(spec, 30, 30))
        b = list(generate_masks(spec, 30, 30))
        for ma, mb in zip(a, b):
            assert np.array_equal(ma, mb)

    def test_seeds_differ(self):
        base = dict(grid_size=5, keep_probability=0.4, num_masks=4)
        a = list(generate_masks(MaskSpec(seed=1, **base), 30, 30))
        b = list(generate_masks(MaskSpec(seed=2, **base), 30, 30))
        assert any(not np.array_equal(x, y) for x, y in zip(a, b))

    def test_grand_mean_converges_to_keep_probability(self):
        spec = MaskSpec(grid_size=16, keep_probability=0.5, num_masks=5000, seed=7)
        total = 0.0
        for m in generate_masks(spec, 64, 64):
            total += float(m.mean())
        grand_mean = total / spec.num_masks
        assert abs(grand_mean - 0.5) < 0.02

    def test_spec_domain(self):
        with pytest.raises(ValueError):
            MaskSpec(grid_size=1)
        with pytest.raises(ValueError):
            MaskSpec(keep_probability=0.0)
        with pytest.raises(ValueError):
            MaskSpec(keep_probability=1.0)
        with pytest.raises(ValueError):
            MaskSpec(num_masks=0)
        with pytest.raises(ValueError):
            MaskSpec(fill="blur")

    def test_spec_json_roundtrip(self):
        spec = MaskSpec(grid_size=8, keep_probability=0.3, num_masks=10, seed=3)
        assert MaskSpec.from_json_dict(spec.to_json_dict()) == spec


class TestApplyMask:
    def test_identity_mask(self):
        img = np.random.default_rng(0).integers(0, 256, (10, 12, 3), dtype=np.uint8)
        assert np.array_equal(apply_mask(img, np.ones((10, 12))), img)

    def test_zero_mask(self):
        img = np.full((10, 12, 3), 200, dtype=np.uint8)
        assert (apply_mask(img, np.zeros((10, 12))) == 0).all()

    def test_half_mask_halves_uniform_image(self):
        img = np.full((6, 6, 3), 128, dtype=np.uint8)
        assert (apply_mask(img, np.full((6, 6), 0.5)) == 64).all()

    def test_dimension_mismatch(self):
        img = np.zeros((10, 12, 3), dtype=np.uint8)
        with pytest.raises(ValueError, match="dimensions"):
            apply_mask(img, np.ones((12, 10)))

    def test_mean_fill_fades_to_image_mean(self):
        img = np.full((8, 8, 3), 100, dtype=np.uint8)
        img[:4] = 200  # mean is 150 per channel
        out = apply_mask(img, np.zeros((8, 8)), fill="mean")
        assert (out == 150).all()


class TestDetectionSimilarity:
    def test_identical_boxes_no_probs(self):
        box = BBox(2, 3, 10, 12)
        t = Detection(box=box, objectness=1.0)
        p = Detection(box=box, objectness=0.9)
        assert detection_similarity(t, p) == 0.9

    def test_disjoint_boxes_score_zero(self):
        t = Detection(box=BBox(0, 0, 5, 5), objectness=1.0, class_probs=(1.0, 0.0))
        p = Detection(box=BBox(10, 10, 20, 20), objectness=1.0, class_probs=(1.0, 0.0))
        assert detection_similarity(t, p) == 0.0

    def test_half_iou_no_probs(self):
        t = Detection(box=BBox(0, 0, 1, 2), objectness=1.0)
        p = Detection(box=BBox(0, 0, 1, 1), objectness=0.8)
        assert detection_similarity(t, p) == pytest.approx(0.4, abs=1e-12)

    def test_cosine_term(self):
        box = BBox(0, 0, 4, 4)
        t = Detection(box=box, objectness=1.0, class_probs=(1.0, 0.0))
        same = Detection(box=box, objectness=1.0, class_probs=(1.0, 0.0))
        ortho = Detection(box=box, objectness=1.0, class_probs=(0.0, 1.0))
        assert detection_similarity(t, same) == pytest.approx(1.0, abs=1e-12)
        assert detection_similarity(t, ortho) == 0.0

    def test_one_sided_probs_ignore_cosine(self):
        box = BBox(0, 0, 4, 4)
        t = Detection(box=box, objectness=1.0)  # gt target: no distribution
        p = Detection(box=box, objectness=0.7, class_probs=(0.2, 0.8))
        assert detection_similarity(t, p) == 0.7

    def test_range(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            def rand_det():
                x1, y1 = rng.uniform(0, 20, 2)
                w, h = rng.uniform(1, 20, 2)
                probs = tuple(rng.uniform(0, 1, 3)) if rng.random() < 0.5 else None
                return Detection(
                    box=BBox(x1, y1, x1 + w, y1 + h),
                    objectness=float(rng.uniform(0, 1)),
                    class_probs=probs,
                )
            s = detection_similarity(rand_det(), rand_det())
            assert 0.0 <= s <= 1.0


class AlwaysSeesTarget(DetectorAdapter):
    """Answers every query with the target box at a fixed objectness."""

    def __init__(self, box, objectness=1.0):
        super().__init__(score_threshold=0.0)
        self._det = Detection(box=box, objectness=objectness)
        self.calls = 0

    def _detect(self, image, record_id):
        self.calls += 1
        return [self._det]


class FlakyAdapter(AlwaysSeesTarget):
    """Raises a transport error on every failing_every-th call."""

    def __init__(self, box, failing_every=3, always_fail=False):
        super().__init__(box)
        self.failing_every = failing_every
        self.always_fail = always_fail

    def _detect(self, image, record_id):
        self.calls += 1
        if self.always_fail or self.calls % self.failing_every == 0:
            raise RetryableDetectorError("transport down")
        return [self._det]


def scene_with_box(box, size=64):
    """Bright region under `box` on a dim (but nonzero) background."""
    arr = np.full((size, size, 3), 40, dtype=np.uint8)
    arr[int(box.y1):int(box.y2), int(box.x1):int(box.x2)] = 220
    return arr


def mock_for(box, path, size=64, tau=0.5):
    record = ImageRecord(
        id="probe", path=str(path), width=size, height=size,
        gt_boxes=(GroundTruthBox(box=box),),
    )
    manifest = DatasetManifest(name="beliefs", records=(record,))
    return MockDetector(
        MockDetectorSpec(manifest=manifest, visibility_threshold=tau),
        score_threshold=0.0,
    )


@pytest.fixture
def probe(tmp_path):
    box = BBox(16, 16, 48, 48)
    image = scene_with_box(box)
    path = tmp_path / "probe.png"
    Image.fromarray(image).save(path)
    return box, image, path


class TestExplain:
    def test_constant_weight_equals_normalized_mask_mean(self, probe):
        box, image, _ = probe
        spec = MaskSpec(grid_size=4, keep_probability=0.5, num_masks=40, seed=2)
        target = Detection(box=box, objectness=1.0)
        smap = explain(image, target, AlwaysSeesTarget(box), spec, "probe")
        expected = np.zeros((64, 64))
        for m in generate_masks(spec, 64, 64):
            expected += m
        assert np.array_equal(smap.values, expected)
        lo, hi = expected.min(), expected.max()
        assert np.array_equal(smap.normalized(), (expected - lo) / (hi - lo))

    def test_single_all_ones_mask_normalizes_to_zero_map(self, probe, monkeypatch):
        box, image, _ = probe
        import detlens.saliency as sal

        monkeypatch.setattr(
            sal, "generate_masks", lambda spec, w, h: iter([np.ones((h, w))])
        )
        spec = MaskSpec(grid_size=4, num_masks=1, seed=0)
        smap = sal.explain(image, Detection(box=box, objectness=1.0),
                           AlwaysSeesTarget(box), spec, "probe")
        assert (smap.values == 1.0).all()  # raw: weight 1 times the ones-mask
        assert (smap.normalized() == 0.0).all()  # constant map rule

    def test_mock_localizes_saliency_inside_the_box(self, probe):
        box, image, path = probe
        spec = MaskSpec(grid_size=8, keep_probability=0.5, num_masks=2000, seed=3)
        adapter = mock_for(box, path, tau=0.5)
        target = Detection(box=box, objectness=1.0)
        norm = explain(image, target, adapter, spec, "probe").normalized()
        inside = np.zeros((64, 64), dtype=bool)
        inside[16:48, 16:48] = True
        assert norm[inside].mean() >= 2.0 * norm[~inside].mean()

    def test_deterministic_bit_for_bit(self, probe):
        box, image, path = probe
        spec = MaskSpec(grid_size=6, keep_probability=0.5, num_masks=60, seed=8)
        target = Detection(box=box, objectness=1.0)
        a = explain(image, target, mock_for(box, path), spec, "probe")
        b = explain(image, target, mock_for(box, path), spec, "probe")
        assert np.array_equal(a.values, b.values)

    def test_parallel_matches_sequential_within_tolerance(self, probe):
        box, image, path = probe
        spec = MaskSpec(grid_size=6, keep_probability=0.5, num_masks=80, seed=8)
        target = Detection(box=box, objectness=1.0)
        seq = explain(image, target, mock_for(box, path), spec, "probe")
        par_adapter = mock_for(box, path)
        par_adapter.request_parallelism = 4
        par = explain(image, target, par_adapter, spec, "probe")
        assert par.skipped_samples == 0
        np.testing.assert_allclose(par.values, seq.values, atol=1e-6)

    def test_raising_tau_never_raises_weights(self, probe):
        box, image, path = probe
        spec = MaskSpec(grid_size=6, keep_probability=0.5, num_masks=150, seed=5)
        target = Detection(box=box, objectness=1.0)
        lo = explain(image, target, mock_for(box, path, tau=0.3), spec, "probe")
        hi = explain(image, target, mock_for(box, path, tau=0.7), spec, "probe")
        assert (lo.values >= hi.values - 1e-12).all()

    def test_raw_map_linear_in_weights_and_normalization_invariant(self, probe):
        box, image, _ = probe
        spec = MaskSpec(grid_size=4, keep_probability=0.5, num_masks=30, seed=11)
        target = Detection(box=box, objectness=1.0)
        half = explain(image, target, AlwaysSeesTarget(box, objectness=0.4), spec, "probe")
        full = explain(image, target, AlwaysSeesTarget(box, objectness=0.8), spec, "probe")
        assert np.array_equal(full.values, 2.0 * half.values)
        assert np.array_equal(full.normalized(), half.normalized())

    def test_out_of_bounds_target_rejected(self, probe):
        _, image, _ = probe
        bad = Detection(box=BBox(50, 50, 80, 70), objectness=1.0)
        with pytest.raises(ValueError, match="clamp"):
            explain(image, bad, AlwaysSeesTarget(bad.box), MaskSpec(num_masks=1), "probe")

    def test_skipped_samples_counted_and_survivable(self, probe):
        box, image, _ = probe
        spec = MaskSpec(grid_size=4, keep_probability=0.5, num_masks=30, seed=1)
        adapter = FlakyAdapter(box, failing_every=3)
        smap = explain(image, Detection(box=box, objectness=1.0), adapter, spec, "probe")
        assert smap.skipped_samples == 10
        assert smap.values.max() > 0.0
        assert smap.skip_flagged  # 33% skips is far past the 1% flag line

    def test_all_samples_failing_is_fatal(self, probe):
        box, image, _ = probe
        adapter = FlakyAdapter(box, always_fail=True)
        with pytest.raises(SaliencyError, match="all 5"):
            explain(image, Detection(box=box, objectness=1.0), adapter,
                    MaskSpec(grid_size=4, num_masks=5, seed=1), "probe")

    def test_protocol_error_propagates(self, probe):
        box, image, _ = probe

        class Broken(DetectorAdapter):
            def _detect(self, image, record_id):
                raise ProtocolError("detections: not a list")

        with pytest.raises(ProtocolError):
            explain(image, Detection(box=box, objectness=1.0), Broken(),
                    MaskSpec(grid_size=4, num_masks=3, seed=1), "probe")


class TestSaliencyMapPersistence:
    def make_map(self, h=10, w=14):
        rng = np.random.default_rng(2)
        return SaliencyMap(
            width=w, height=h, values=rng.random((h, w)) * 7.0,
            target=Detection(box=BBox(1, 1, 5, 5), objectness=1.0),
            spec=MaskSpec(grid_size=4, num_masks=10, seed=1),
            skipped_samples=2,
        )

    def test_raw_roundtrip(self, tmp_path):
        smap = self.make_map()
        path = tmp_path / "map.f32"
        write_raw(smap, path)
        assert path.stat().st_size == 10 * 14 * 4
        back = read_raw(path, smap.width, smap.height)
        np.testing.assert_allclose(back, smap.values, atol=1e-6)

    def test_raw_size_validated(self, tmp_path):
        path = tmp_path / "map.f32"
        np.zeros(5, dtype="<f4").tofile(path)
        with pytest.raises(ValueError, match="expected"):
            read_raw(path, 10, 14)

    def test_sidecar_fields(self, tmp_path):
        smap = self.make_map()
        path = tmp_path / "map.json"
        write_sidecar(smap, path)
        data = json.loads(path.read_text())
        assert data["width"] == 14 and data["height"] == 10
        assert data["skipped_samples"] == 2
        assert data["skip_flagged"] is True
        assert data["target"]["box"] == [1.0, 1.0, 5.0, 5.0]
        assert data["target"]["class_probs"] is None
        assert MaskSpec.from_json_dict(data["spec"]) == smap.spec

    def test_dims_validated(self):
        with pytest.raises(ValueError, match="does not match"):
            SaliencyMap(
                width=5, height=5, values=np.zeros((4, 5)),
                target=Detection(box=BBox(0, 0, 1, 1), objectness=1.0),
                spec=MaskSpec(num_masks=1),
            )

    def test_normalized_range_and_max(self):
        smap = self.make_map()
        norm = smap.normalized()
        assert norm.min() == 0.0 and norm.max() == 1.0


class TestRenderOverlay:
    def make_map(self, values):
        h, w = values.shape
        return SaliencyMap(
            width=w, height=h, values=values,
            target=Detection(box=BBox(2, 2, 8, 8), objectness=1.0),
            spec=MaskSpec(num_masks=1),
        )

    def test_alpha_zero_is_identity(self):
        img = np.random.default_rng(0).integers(0, 256, (12, 12, 3), dtype=np.uint8)
        smap = self.make_map(np.random.default_rng(1).random((12, 12)))
        out = render_overlay(img, smap, alpha=0.0, draw_target=False)
        assert np.array_equal(out, img)

    def test_alpha_one_constant_hot_map_is_top_ramp_color(self):
        img = np.zeros((12, 12, 3), dtype=np.uint8)
        values = np.ones((12, 12))
        values[0, 0] = 0.0  # give min-max a range so the rest normalizes to 1
        smap = self.make_map(values)
        out = render_overlay(img, smap, alpha=1.0, draw_target=False)
        top = np.rint(np.array(colormaps["jet"](1.0)[:3]) * 255).astype(np.uint8)
        assert (out[5, 5] == top).all()

    def test_zero_map_blends_lowest_ramp_color(self):
        img = np.full((12, 12, 3), 100, dtype=np.uint8)
        smap = self.make_map(np.zeros((12, 12)))
        out = render_overlay(img, smap, alpha=0.5, draw_target=False)
        low = np.array(colormaps["jet"](0.0)[:3]) * 255.0
        expected = np.clip(np.rint(0.5 * 100 + 0.5 * low), 0, 255).astype(np.uint8)
        assert (out == expected).all()

    def test_target_outline_drawn(self):
        img = np.zeros((12, 12, 3), dtype=np.uint8)
        smap = self.make_map(np.zeros((12, 12)))
        out = render_overlay(img, smap, alpha=0.0, draw_target=True)
        assert (out[2, 2] == [255, 255, 255]).all()
        assert (out[7, 5] == [255, 255, 255]).all()  # bottom edge, 2px thick
        assert not np.array_equal(out, render_overlay(img, smap, 0.0, draw_target=False))

    def test_alpha_domain(self):
        img = np.zeros((12, 12, 3), dtype=np.uint8)
        smap = self.make_map(np.zeros((12, 12)))
        with pytest.raises(ValueError, match="alpha"):
            render_overlay(img, smap, alpha=1.5)
