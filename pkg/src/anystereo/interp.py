"""Deterministic resampling primitives shared across the package.

Everything here is plain numpy with a fixed evaluation order, so results
are bitwise reproducible regardless of thread count or call site.  Sizes
use the half-pixel center convention: output sample i maps to input
coordinate (i + 0.5) * n_in / n_out - 0.5, clamped to the valid range.
"""

from __future__ import annotations

import numpy as np


def halfpixel_coords(n_out: int, n_in: int) -> np.ndarray:
    """Input-space sample coordinates for resizing n_in -> n_out."""
    if n_out < 1 or n_in < 1:
        raise ValueError(f"sizes must be positive, got n_out={n_out} n_in={n_in}")
    i = np.arange(n_out, dtype=np.float64)
    coords = (i + 0.5) * (n_in / n_out) - 0.5
    return np.clip(coords, 0.0, n_in - 1.0)


def resample_axis_linear(
    arr: np.ndarray, coords: np.ndarray, axis: int, extrapolate: bool = False
) -> np.ndarray:
    """Linearly resample one axis of arr at the given coordinates.

    Coordinates outside [0, n-1] are clamped by default.  With
    extrapolate=True the boundary segments are continued linearly
    instead, which keeps a piecewise-linear signal (and in particular
    its zero crossing) intact past the last sample.
    """
    n = arr.shape[axis]
    if extrapolate and n >= 2:
        coords = np.asarray(coords, dtype=np.float64)
        lo = np.clip(np.floor(coords).astype(np.intp), 0, n - 2)
        hi = lo + 1
    else:
        coords = np.clip(coords, 0.0, n - 1.0)
        lo = np.floor(coords).astype(np.intp)
        hi = np.minimum(lo + 1, n - 1)
    frac = (coords - lo).astype(arr.dtype if arr.dtype.kind == "f" else np.float64)
    a_lo = np.take(arr, lo, axis=axis)
    a_hi = np.take(arr, hi, axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = len(coords)
    w = frac.reshape(shape)
    return a_lo * (1.0 - w) + a_hi * w


def resize_bilinear(arr: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Resize the leading two axes of arr (H, W[, C]) to out_hw."""
    cy = halfpixel_coords(out_hw[0], arr.shape[0])
    cx = halfpixel_coords(out_hw[1], arr.shape[1])
    out = resample_axis_linear(arr, cy, axis=0)
    return resample_axis_linear(out, cx, axis=1)


def nearest_index_map(n_out: int, n_in: int) -> np.ndarray:
    """Nearest-neighbor index map under the half-pixel convention."""
    coords = halfpixel_coords(n_out, n_in)
    return np.clip(np.floor(coords + 0.5).astype(np.intp), 0, n_in - 1)


def resize_nearest(arr: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize of the leading two axes."""
    iy = nearest_index_map(out_hw[0], arr.shape[0])
    ix = nearest_index_map(out_hw[1], arr.shape[1])
    return arr[iy][:, ix]


def sample_bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample img at float coordinates with bilinear weights, clamping to edges.

    img has shape (H, W) or (H, W, C); ys/xs share any broadcastable shape.
    Integer coordinates reproduce source pixels exactly (weights are 0/1).
    """
    h, w = img.shape[0], img.shape[1]
    ys = np.clip(np.asarray(ys, dtype=np.float64), 0.0, h - 1.0)
    xs = np.clip(np.asarray(xs, dtype=np.float64), 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    if img.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    return out.astype(img.dtype, copy=False)
