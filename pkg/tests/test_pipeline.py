"""Staged matcher: anytime contract, modes, determinism, stopping distances."""

import dataclasses

import numpy as np
import pytest

from anystereo.config import ConfigError, MatcherConfig, aligned_d_max, tuned_decoder_config
from anystereo.pipeline import (
    MODE_FACTORS,
    match,
    match_native_levels,
    match_single_scale,
    stopping_distance,
)
from anystereo.raster_io import Image
from anystereo.synthetic import generate

pytestmark = pytest.mark.filterwarnings("ignore:.*vpp grid.*:UserWarning",
                                        "ignore:.*pooling skipped.*:UserWarning")


def interior_mask(gt, d_max, margin=16):
    m = np.zeros(gt.disparity.shape, bool)
    m[margin:-margin, d_max + margin:-margin] = True
    return m & gt.valid


class TestAnytimeContract:
    def test_three_reports_by_default(self, small_scene, small_cfg):
        reports = match(small_scene.left, small_scene.right, small_cfg)
        assert [r.stage for r in reports] == [1, 2, 3]
        assert [r.level_index for r in reports] == [3, 2, 1]

    def test_counters_strictly_increasing(self, small_scene, small_cfg):
        reports = match(small_scene.left, small_scene.right, small_cfg)
        elapsed = [r.elapsed_ms for r in reports]
        work = [r.work_cells for r in reports]
        assert elapsed == sorted(elapsed) and len(set(elapsed)) == 3
        assert work == sorted(work) and len(set(work)) == 3

    def test_budget_zero_stops_after_stage_one(self, small_scene, small_cfg):
        trace = []
        reports = match(small_scene.left, small_scene.right, small_cfg,
                        budget_ms=0.0, trace=trace)
        assert len(reports) == 1
        assert reports[0].stage == 1 and reports[0].level_index == 3
        # no finer-level work of any kind was scheduled
        touched = {lvl for _, lvl in trace if lvl in (1, 2)}
        assert touched == set()

    def test_generous_budget_runs_everything(self, small_scene, small_cfg):
        reports = match(small_scene.left, small_scene.right, small_cfg,
                        budget_ms=1e9)
        assert len(reports) == 3

    def test_stage_work_nested(self, small_scene, small_cfg):
        """A halted run's counter equals the full run's counter at that stage."""
        partial = match(small_scene.left, small_scene.right, small_cfg, budget_ms=0.0)
        full = match(small_scene.left, small_scene.right, small_cfg)
        assert partial[0].work_cells == full[0].work_cells

    def test_on_report_streams_in_order(self, small_scene, small_cfg):
        seen = []
        reports = match(small_scene.left, small_scene.right, small_cfg,
                        on_report=seen.append)
        assert seen == reports

    def test_stages_enabled_limits_depth(self, small_scene, small_cfg):
        cfg = dataclasses.replace(small_cfg, stages_enabled=2)
        reports = match(small_scene.left, small_scene.right, cfg)
        assert [r.stage for r in reports] == [1, 2]

    def test_coarse_work_is_smaller(self, small_scene, small_cfg):
        reports = match(small_scene.left, small_scene.right, small_cfg)
        stage1 = reports[0].work_cells
        stage3 = reports[-1].work_cells
        assert stage1 < stage3


class TestOutputs:
    def test_reports_at_input_resolution(self, small_scene, small_cfg):
        for rep in match(small_scene.left, small_scene.right, small_cfg):
            assert rep.disparity.disparity.shape == (128, 192)

    def test_modes_keep_original_resolution_and_units(self):
        sc = generate("constant", hw=(256, 320), seed=21, d0=21.0)
        for mode in ("F", "H", "Q"):
            cfg = MatcherConfig(d_max=48, decoder=tuned_decoder_config(),
                                threads=1, input_mode=mode)
            reports = match(sc.left, sc.right, cfg)
            assert len(reports) == 3
            assert reports[-1].disparity.disparity.shape == (256, 320)
        assert MODE_FACTORS == {"F": 1, "H": 2, "Q": 4}

    def test_half_mode_still_matches(self):
        # Half resolution doubles the bin unit, so only a loose recovery
        # bound is meaningful on a small scene.
        sc = generate("constant", hw=(256, 320), seed=21, d0=21.0)
        cfg = MatcherConfig(d_max=48, decoder=tuned_decoder_config(),
                            threads=1, input_mode="H")
        rep = match(sc.left, sc.right, cfg)[-1]
        mask = interior_mask(sc.gt, 48) & rep.disparity.valid
        err = np.abs(rep.disparity.disparity - sc.gt.disparity)[mask]
        assert float(err.mean()) < 12.0

    def test_single_scale_shape_and_stage(self, small_scene, small_cfg):
        trace = []
        rep = match_single_scale(small_scene.left, small_scene.right,
                                 small_cfg, trace=trace)
        assert rep.stage == 1 and rep.level_index == 1
        assert rep.disparity.disparity.shape == (128, 192)
        assert {lvl for ev, lvl in trace if ev == "volume"} == {1}
        assert not any(ev == "fuse" for ev, _ in trace)

    def test_native_levels_shapes_and_units(self, small_scene, small_cfg):
        out = match_native_levels(small_scene.left, small_scene.right, small_cfg)
        assert sorted(out) == [1, 2, 3, 4]
        for k, dm in out.items():
            div = (None, 8, 16, 32, 64)[k]
            assert dm.disparity.shape == (-(-128 // div), -(-192 // div))
        # native units: a 13 px constant scene reads out near 13/8 level px
        level1 = out[1].disparity
        inner = level1[4:-4, 10:-4]
        assert abs(float(np.median(inner)) - 13.0 / 8.0) < 1.0


class TestValidation:
    def test_mismatched_shapes_rejected(self, small_scene, small_cfg):
        bad = Image(np.zeros((64, 192, 1), np.float32))
        with pytest.raises(ValueError, match="disagree"):
            match(small_scene.left, bad, small_cfg)

    def test_dmax_wider_than_image_rejected(self, small_scene):
        cfg = MatcherConfig(d_max=192, decoder=tuned_decoder_config())
        with pytest.raises(ConfigError, match="width"):
            match(small_scene.left, small_scene.right, cfg)


class TestStoppingDistance:
    @pytest.mark.parametrize("mph,meters", [(25, 25.0), (40, 60.0), (55, 115.0)])
    def test_supported_tiers_exact(self, mph, meters):
        assert stopping_distance(mph) == meters
        assert stopping_distance(float(mph)) == meters

    def test_unsupported_speed_rejected(self):
        with pytest.raises(ValueError, match="stopping-distance"):
            stopping_distance(30)


class TestDeterminism:
    def test_threads_bitwise_identical(self, small_scene, small_cfg):
        cfg4 = dataclasses.replace(small_cfg, threads=4)
        r1 = match(small_scene.left, small_scene.right, small_cfg)
        r4 = match(small_scene.left, small_scene.right, cfg4)
        assert len(r1) == len(r4)
        for a, b in zip(r1, r4):
            assert np.array_equal(a.disparity.disparity.view(np.uint32),
                                  b.disparity.disparity.view(np.uint32))
            assert a.work_cells == b.work_cells

    def test_repeat_run_bitwise_identical(self, small_scene, small_cfg):
        a = match(small_scene.left, small_scene.right, small_cfg)[-1]
        b = match(small_scene.left, small_scene.right, small_cfg)[-1]
        assert np.array_equal(a.disparity.disparity.view(np.uint32),
                              b.disparity.disparity.view(np.uint32))


class TestShiftRecovery:
    """End-to-end recovery of known integer shifts on textured pairs.

    The readout temperature is raised above the shipped default here:
    near the zero-disparity edge the softmax tail otherwise drags small
    estimates upward, which is a calibration tradeoff rather than a
    pipeline defect (the default favors mid-range accuracy).
    """

    @pytest.mark.parametrize("j,d0", [(0, 4), (1, 12), (2, 40), (3, 72)])
    def test_integer_shift_within_half_fine_bin(self, j, d0):
        dec = dataclasses.replace(tuned_decoder_config(), softmax_temperature=2.5)
        d_max = aligned_d_max(96.0)
        cfg = MatcherConfig(d_max=d_max, decoder=dec, threads=1)
        sc = generate("constant", hw=(320, 448), seed=5200 + j, d0=float(d0))
        rep = match(sc.left, sc.right, cfg)[-1]
        mask = interior_mask(sc.gt, d_max) & rep.disparity.valid
        err = np.abs(rep.disparity.disparity - sc.gt.disparity)[mask]
        frac_within = float(np.count_nonzero(err <= 8.0)) / err.size
        assert frac_within >= 0.99
