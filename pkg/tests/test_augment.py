"""Augmentation exactness: warps, tone, masks, crops, sampled specs."""

import math

import numpy as np
import pytest

from anystereo.augment import (
    SWEEP_RANGES,
    TRAINING_RANGES,
    AugmentationSpec,
    Chromatic,
    MaskRect,
    ScaleCrop,
    YDisparity,
    apply_spec,
    asymmetric_chromatic,
    asymmetric_mask,
    identity_spec,
    rotation_displacement,
    sample_spec,
    spec_from_dict,
    spec_to_dict,
    symmetric_scale_crop,
    ydisparity_warp,
)
from anystereo.raster_io import DisparityMap, Image


def rand_image(rng, h=40, w=56, channels=1):
    shape = (h, w) if channels == 1 else (h, w, channels)
    return Image(data=rng.random(shape).astype(np.float32))


class TestYDisparityWarp:
    def test_zero_parameters_bitwise_noop(self, rng):
        img = rand_image(rng)
        out = ydisparity_warp(img, 0.0, 0.0)
        assert out is not img
        assert np.array_equal(out.data.view(np.uint32), img.data.view(np.uint32))

    @pytest.mark.parametrize("ty", [1, 2, 5])
    def test_integer_translation_is_exact_row_shift(self, rng, ty):
        img = rand_image(rng)
        out = ydisparity_warp(img, 0.0, float(ty))
        assert np.array_equal(out.data[ty:], img.data[:-ty])
        # rows pulled from above the frame clamp to the first row
        for y in range(ty):
            assert np.array_equal(out.data[y], img.data[0])

    def test_rotation_moves_corners_more_than_center(self, rng):
        img = rand_image(rng, h=64, w=64)
        out = ydisparity_warp(img, 2.0, 0.0)
        diff = np.abs(out.data - img.data)
        center = diff[28:36, 28:36].mean()
        corner = diff[:8, :8].mean()
        assert corner > center

    def test_nonfinite_parameters_rejected(self, rng):
        img = rand_image(rng)
        with pytest.raises(ValueError, match="finite"):
            ydisparity_warp(img, float("nan"), 0.0)
        with pytest.raises(ValueError, match="finite"):
            ydisparity_warp(img, 0.0, float("inf"))

    def test_rotation_displacement_anchor(self):
        # 0.05 degrees at the far corner of a 1242x2208-style frame
        assert rotation_displacement(0.05, 1232.0) == pytest.approx(1.0751, abs=1e-3)

    def test_rotation_displacement_small_angle_linear(self):
        d1 = rotation_displacement(0.01, 500.0)
        d2 = rotation_displacement(0.02, 500.0)
        assert d2 == pytest.approx(2.0 * d1, rel=1e-6)


class TestChromatic:
    def test_unit_parameters_bitwise_noop(self, rng):
        img = rand_image(rng, channels=3)
        out = asymmetric_chromatic(img, 1.0, 1.0, 1.0)
        assert out is not img
        assert np.array_equal(out.data.view(np.uint32), img.data.view(np.uint32))

    def test_formula_oracle(self, rng):
        img = rand_image(rng)
        b, g, c = 1.5, 1.1, 0.9
        out = asymmetric_chromatic(img, b, g, c)
        x = img.data.astype(np.float64)
        want = np.clip((np.power(b * x, g) - 0.5) * c + 0.5, 0.0, 1.0).astype(np.float32)
        assert np.array_equal(out.data, want)

    def test_output_clamped_to_unit_range(self, rng):
        img = rand_image(rng)
        out = asymmetric_chromatic(img, 2.0, 1.2, 1.2)
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0

    def test_nonpositive_parameters_rejected(self, rng):
        img = rand_image(rng)
        for args in ((0.0, 1.0, 1.0), (1.0, -0.1, 1.0), (1.0, 1.0, 0.0)):
            with pytest.raises(ValueError, match="positive"):
                asymmetric_chromatic(img, *args)


class TestMask:
    def test_fill_is_exact_whole_image_mean(self, rng):
        img = rand_image(rng, h=30, w=40)
        out = asymmetric_mask(img, (5, 6, 10, 8))
        mean = np.float32(math.fsum(img.data.ravel(order="K")) / img.data.size)
        patch = out.data[6:14, 5:15]
        assert (patch == mean).all()

    def test_color_fill_per_channel(self, rng):
        img = rand_image(rng, h=24, w=24, channels=3)
        out = asymmetric_mask(img, (4, 4, 6, 6))
        for ch in range(3):
            mean = np.float32(math.fsum(img.data[:, :, ch].ravel(order="K")) / (24 * 24))
            assert (out.data[4:10, 4:10, ch] == mean).all()

    def test_pixels_outside_rect_untouched(self, rng):
        img = rand_image(rng, h=30, w=40)
        out = asymmetric_mask(img, (5, 6, 10, 8))
        untouched = np.ones((30, 40), bool)
        untouched[6:14, 5:15] = False
        assert np.array_equal(out.data[untouched], img.data[untouched])

    def test_rect_clipped_to_frame(self, rng):
        img = rand_image(rng, h=20, w=20)
        out = asymmetric_mask(img, (15, 15, 50, 50))
        mean = np.float32(math.fsum(img.data.ravel(order="K")) / img.data.size)
        assert (out.data[15:, 15:] == mean).all()
        assert np.array_equal(out.data[:15], img.data[:15])

    def test_masking_constant_image_changes_nothing(self):
        img = Image(data=np.full((16, 16), 0.25, np.float32))
        out = asymmetric_mask(img, (2, 2, 5, 5))
        assert np.array_equal(out.data, img.data)

    def test_degenerate_rects_rejected(self, rng):
        img = rand_image(rng, h=20, w=20)
        with pytest.raises(ValueError, match="positive size"):
            asymmetric_mask(img, (2, 2, 0, 5))
        with pytest.raises(ValueError, match="intersect"):
            asymmetric_mask(img, (30, 30, 5, 5))


class TestScaleCrop:
    def make_triple(self, rng, h=100, w=200, d0=10.0):
        left = rand_image(rng, h=h, w=w)
        right = rand_image(rng, h=h, w=w)
        gt = DisparityMap(disparity=np.full((h, w), d0, np.float32),
                          valid=np.ones((h, w), bool))
        return left, right, gt

    def test_disparity_scaled_by_realized_factor(self, rng):
        left, right, gt = self.make_triple(rng)
        # 200 * 0.333 rounds to 67, so the realized factor is 0.335
        l2, r2, g2 = symmetric_scale_crop(left, right, gt, 0.333, (0, 0), (20, 30))
        realized = 67 / 200
        assert realized != 0.333
        assert np.allclose(g2.disparity[g2.valid], np.float32(10.0 * realized))

    def test_shapes_follow_crop(self, rng):
        left, right, gt = self.make_triple(rng)
        l2, r2, g2 = symmetric_scale_crop(left, right, gt, 0.5, (3, 2), (20, 30))
        assert l2.data.shape == (20, 30)
        assert r2.data.shape == (20, 30)
        assert g2.disparity.shape == (20, 30)

    def test_unit_scale_full_crop_identity(self, rng):
        left, right, gt = self.make_triple(rng)
        l2, r2, g2 = symmetric_scale_crop(left, right, gt, 1.0, (0, 0), (100, 200))
        assert np.array_equal(l2.data, left.data)
        assert np.array_equal(r2.data, right.data)
        assert np.array_equal(g2.disparity, gt.disparity)

    def test_same_window_cut_from_all_three(self, rng):
        left, right, gt = self.make_triple(rng)
        gt.disparity[:50] = 5.0  # top half differs
        l2, r2, g2 = symmetric_scale_crop(left, right, gt, 1.0, (10, 5), (30, 40))
        assert np.array_equal(l2.data, left.data[5:35, 10:50])
        assert np.array_equal(g2.disparity, gt.disparity[5:35, 10:50])

    def test_out_of_frame_crop_rejected(self, rng):
        left, right, gt = self.make_triple(rng)
        with pytest.raises(ValueError, match="exceeds"):
            symmetric_scale_crop(left, right, gt, 0.5, (90, 0), (20, 30))

    def test_bad_scale_rejected(self, rng):
        left, right, gt = self.make_triple(rng)
        with pytest.raises(ValueError, match="scale"):
            symmetric_scale_crop(left, right, gt, 0.0, (0, 0), (20, 30))

    def test_default_crop_window(self):
        sc = ScaleCrop(scale=1.0, crop_x=0, crop_y=0)
        assert (sc.crop_h, sc.crop_w) == (576, 768)


class TestSampleSpec:
    def test_same_seed_same_spec(self):
        assert sample_spec(123) == sample_spec(123)
        assert sample_spec(123) != sample_spec(124)

    def test_parameters_within_training_ranges(self):
        n_y = n_m = 0
        for seed in range(2000):
            spec = sample_spec(seed, hw=(512, 640))
            for chrom in (spec.chromatic_left, spec.chromatic_right):
                assert chrom is not None
                assert 0.5 <= chrom.brightness <= 2.0
                assert 0.8 <= chrom.gamma <= 1.2
                assert 0.8 <= chrom.contrast <= 1.2
            if spec.ydisp is not None:
                n_y += 1
                assert 0.0 <= spec.ydisp.rotation <= 0.1
                assert 0.0 <= spec.ydisp.ty <= 2.0
            if spec.mask is not None:
                n_m += 1
                m = spec.mask
                assert 50 <= m.w <= 150 and 50 <= m.h <= 150
                assert 0 <= m.x <= 640 - m.w
                assert 0 <= m.y <= 512 - m.h
        assert 0.45 < n_y / 2000 < 0.55
        assert 0.45 < n_m / 2000 < 0.55

    def test_sweep_ranges_stretch_rigid_warp(self):
        assert SWEEP_RANGES["rotation"] == (0.0, 0.4)
        assert SWEEP_RANGES["ty"] == (0.0, 4.0)
        assert SWEEP_RANGES["brightness"] == TRAINING_RANGES["brightness"]
        got_big = False
        for seed in range(300):
            spec = sample_spec(seed, ranges=SWEEP_RANGES)
            if spec.ydisp is not None:
                assert spec.ydisp.rotation <= 0.4
                if spec.ydisp.rotation > 0.1 or spec.ydisp.ty > 2.0:
                    got_big = True
        assert got_big


class TestApplySpec:
    def test_identity_spec_is_noop(self, rng):
        left, right = rand_image(rng), rand_image(rng)
        out_l, out_r = apply_spec(left, right, identity_spec())
        assert np.array_equal(out_l.data.view(np.uint32), left.data.view(np.uint32))
        assert np.array_equal(out_r.data.view(np.uint32), right.data.view(np.uint32))

    def test_left_view_gets_only_its_chromatic(self, rng):
        left, right = rand_image(rng), rand_image(rng)
        spec = AugmentationSpec(
            seed=0,
            ydisp=YDisparity(rotation=0.0, ty=3.0),
            chromatic_left=Chromatic(brightness=1.2, gamma=1.0, contrast=1.0),
            chromatic_right=None,
            mask=MaskRect(x=2, y=2, w=6, h=6),
        )
        out_l, out_r = apply_spec(left, right, spec)
        want_l = asymmetric_chromatic(left, 1.2, 1.0, 1.0)
        assert np.array_equal(out_l.data, want_l.data)
        # right went through warp then mask, so rows shifted by 3
        assert np.array_equal(out_r.data[20:], right.data[17:-3])

    def test_mask_fill_uses_post_warp_image(self, rng):
        left, right = rand_image(rng), rand_image(rng)
        spec = AugmentationSpec(
            seed=0,
            ydisp=YDisparity(rotation=0.0, ty=4.0),
            mask=MaskRect(x=10, y=10, w=8, h=8),
        )
        _, out_r = apply_spec(left, right, spec)
        warped = ydisparity_warp(right, 0.0, 4.0)
        mean = np.float32(math.fsum(warped.data.ravel(order="K")) / warped.data.size)
        assert (out_r.data[10:18, 10:18] == mean).all()

    def test_spec_dict_round_trip(self):
        full = sample_spec(7)
        assert spec_from_dict(spec_to_dict(full)) == full
        sparse = AugmentationSpec(seed=3, symmetric=ScaleCrop(0.8, 10, 12))
        assert spec_from_dict(spec_to_dict(sparse)) == sparse

    def test_spec_from_partial_dict(self):
        spec = spec_from_dict({"seed": 9, "ydisp": {"rotation": 0.1, "ty": 1.0}})
        assert spec.ydisp == YDisparity(rotation=0.1, ty=1.0)
        assert spec.mask is None and spec.chromatic_left is None
