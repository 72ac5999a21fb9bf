import numpy as np
import pytest

from anystereo.config import ConfigError
from anystereo.encoder import extract_descriptors
from anystereo.volume import build_feature_volume, n_bins_for, stride_for_level


def test_stride_for_level_defaults():
    assert [stride_for_level(k) for k in (1, 2, 3, 4)] == [2, 2, 1, 1]
    with pytest.raises(ConfigError):
        stride_for_level(0)


def test_n_bins_for_ceil():
    assert n_bins_for(144, 8, 2) == 9
    assert n_bins_for(144, 16, 2) == 5
    assert n_bins_for(144, 32, 1) == 5
    assert n_bins_for(144, 64, 1) == 3
    assert n_bins_for(1, 64, 1) == 1
    with pytest.raises(ConfigError):
        n_bins_for(0, 8, 2)


def make_level_pair(rng, hw=(10, 14), k=1):
    left = extract_descriptors(rng.random(hw).astype(np.float32), k)
    right = extract_descriptors(rng.random(hw).astype(np.float32), k)
    return left, right


class TestBuildFeatureVolume:
    def test_oracle_elementwise(self, rng):
        # direct loop over (c, d, y, x) computing f_L - f_R[x - d*stride]
        left, right = make_level_pair(rng)
        vol = build_feature_volume(left, right, d_max=48.0, stride=2)
        f_l, f_r = left.materialize(), right.materialize()
        c, h, w = f_l.shape
        assert vol.data.shape == (c, vol.n_bins, h, w)
        for d in range(vol.n_bins):
            for x in range(w):
                src = max(x - d * 2, 0)
                expect = f_l[:, :, x] - f_r[:, :, src]
                assert np.array_equal(vol.data[:, d, :, x], expect), (d, x)
                assert vol.reach[d, x] == (x - d * 2 >= 0)

    def test_bin_zero_is_plain_difference(self, rng):
        left, right = make_level_pair(rng)
        vol = build_feature_volume(left, right, d_max=16.0, stride=1)
        assert np.array_equal(vol.data[:, 0], left.materialize() - right.materialize())
        assert vol.reach[0].all()

    def test_bin_unit_property(self, rng):
        left, right = make_level_pair(rng, k=2)
        vol = build_feature_volume(left, right, d_max=64.0, stride=2)
        assert vol.divisor == 16
        assert vol.bin_unit == 32
        assert vol.n_bins == 2

    def test_identical_views_zero_at_d0(self, rng):
        left, _ = make_level_pair(rng)
        vol = build_feature_volume(left, left, d_max=32.0, stride=2)
        assert np.all(vol.data[:, 0] == 0.0)

    def test_mismatched_levels_rejected(self, rng):
        left = extract_descriptors(rng.random((10, 14)).astype(np.float32), 1)
        right = extract_descriptors(rng.random((10, 14)).astype(np.float32), 2)
        with pytest.raises(ValueError):
            build_feature_volume(left, right, d_max=32.0, stride=2)

    def test_mismatched_shapes_rejected(self, rng):
        left = extract_descriptors(rng.random((10, 14)).astype(np.float32), 1)
        right = extract_descriptors(rng.random((10, 15)).astype(np.float32), 1)
        with pytest.raises(ValueError):
            build_feature_volume(left, right, d_max=32.0, stride=2)

    def test_fractional_stride_rejected(self, rng):
        left, right = make_level_pair(rng)
        with pytest.raises(ConfigError):
            build_feature_volume(left, right, d_max=32.0, stride=0)

    def test_threads_bitwise_identical(self, rng):
        left, right = make_level_pair(rng, hw=(12, 20))
        a = build_feature_volume(left, right, d_max=64.0, stride=2, threads=1)
        b = build_feature_volume(left, right, d_max=64.0, stride=2, threads=4)
        assert np.array_equal(a.data, b.data)
        assert np.array_equal(a.reach, b.reach)
