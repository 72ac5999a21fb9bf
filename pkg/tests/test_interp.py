import numpy as np

from anystereo.interp import (
    halfpixel_coords,
    nearest_index_map,
    resample_axis_linear,
    resize_bilinear,
    resize_nearest,
    sample_bilinear,
)


def test_halfpixel_identity():
    # same-size mapping must hit source centers exactly
    assert np.allclose(halfpixel_coords(5, 5), np.arange(5, dtype=np.float64))


def test_halfpixel_downsample_two():
    # 2x downsample centers sit halfway between source pairs
    got = halfpixel_coords(3, 6)
    assert np.allclose(got, [0.5, 2.5, 4.5])


def test_halfpixel_clipped_to_domain():
    got = halfpixel_coords(10, 3)
    assert got.min() >= 0.0 and got.max() <= 2.0


def test_resample_axis_identity_bitwise(rng):
    arr = rng.random((4, 7)).astype(np.float32)
    out = resample_axis_linear(arr, np.arange(7, dtype=np.float64), axis=1)
    assert np.array_equal(out, arr)


def test_resample_axis_midpoints():
    arr = np.array([0.0, 2.0, 6.0], dtype=np.float32)
    out = resample_axis_linear(arr, np.array([0.5, 1.5]), axis=0)
    assert np.allclose(out, [1.0, 4.0])


def test_resample_axis_extrapolate():
    arr = np.array([0.0, 1.0], dtype=np.float32)
    out = resample_axis_linear(arr, np.array([-1.0, 2.0]), axis=0, extrapolate=True)
    assert np.allclose(out, [-1.0, 2.0])
    clamped = resample_axis_linear(arr, np.array([-1.0, 2.0]), axis=0)
    assert np.allclose(clamped, [0.0, 1.0])


def test_resize_bilinear_identity(rng):
    arr = rng.random((6, 9)).astype(np.float32)
    assert np.array_equal(resize_bilinear(arr, (6, 9)), arr)


def test_resize_bilinear_constant_preserved():
    arr = np.full((4, 4), 3.25, dtype=np.float32)
    out = resize_bilinear(arr, (11, 7))
    assert np.allclose(out, 3.25)


def test_nearest_index_map_values():
    assert nearest_index_map(4, 2).tolist() == [0, 0, 1, 1]
    assert nearest_index_map(2, 2).tolist() == [0, 1]


def test_resize_nearest_bool_mask():
    mask = np.array([[True, False]], dtype=bool)
    out = resize_nearest(mask, (2, 4))
    assert out.dtype == bool
    assert out.tolist() == [[True, True, False, False]] * 2


class TestSampleBilinear:
    def test_integer_coords_reproduce_pixels(self, rng):
        img = rng.random((5, 8)).astype(np.float32)
        ys, xs = np.mgrid[0:5, 0:8].astype(np.float64)
        out = sample_bilinear(img, ys, xs)
        assert np.array_equal(out, img)

    def test_midpoint_average(self):
        img = np.array([[0.0, 4.0]], dtype=np.float32)
        out = sample_bilinear(img, np.array([[0.0]]), np.array([[0.5]]))
        assert np.allclose(out, 2.0)

    def test_clamps_beyond_edges(self):
        img = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
        out = sample_bilinear(
            img, np.array([[-5.0, 9.0]]), np.array([[-5.0, 9.0]])
        )
        assert out.tolist() == [[1.0, 4.0]]

    def test_color_channels(self, rng):
        img = rng.random((4, 4, 3)).astype(np.float32)
        out = sample_bilinear(img, np.array([[1.0]]), np.array([[2.0]]))
        assert np.array_equal(out[0, 0], img[1, 2])
