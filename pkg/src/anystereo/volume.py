"""4D feature volume construction.

A feature volume holds signed descriptor differences between the left
view and the right view shifted by each candidate disparity:

    V[c, d, y, x] = f_L[c, y, x] - f_R[c, y, x - d * s_k]

Candidates step by the level's disparity stride s_k (in level pixels),
so bin d corresponds to d * s_k * divisor_k full-resolution pixels.
Samples that would fall left of the image clamp to the edge and are
flagged unreachable in a (d, x) reach mask that the cost readout uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import DEFAULT_STRIDES, ConfigError
from .encoder import FeatureLevel
from .parallel import run_indexed

__all__ = ["FeatureVolume", "stride_for_level", "n_bins_for", "build_feature_volume"]


def stride_for_level(k: int, strides=DEFAULT_STRIDES) -> int:
    """Disparity stride for pyramid level k (1 = finest)."""
    if not 1 <= k <= 4:
        raise ConfigError(f"level index must be in 1..4, got {k}")
    s = strides[k - 1]
    if not isinstance(s, (int, np.integer)) or s < 1:
        raise ConfigError(f"stride must be an integer >= 1, got {s!r}")
    return int(s)


def n_bins_for(d_max: float, divisor: int, stride: int) -> int:
    """Bin count covering the full-resolution search range at this level."""
    if d_max <= 0:
        raise ConfigError(f"d_max must be positive, got {d_max}")
    return max(1, math.ceil(d_max / (divisor * stride)))


@dataclass
class FeatureVolume:
    """Signed descriptor-difference volume for one pyramid level."""

    scale_index: int
    stride: int
    divisor: int
    data: np.ndarray  # (C, D, H, W) float32
    reach: np.ndarray  # (D, W) bool, True where the right sample exists
    channel_kinds: tuple[str, ...]

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_bins(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    @property
    def bin_unit(self) -> int:
        """Full-resolution pixels per disparity bin."""
        return self.stride * self.divisor

    def replaced(self, data: np.ndarray) -> "FeatureVolume":
        return replace(self, data=data)


def build_feature_volume(
    left: FeatureLevel,
    right: FeatureLevel,
    d_max: float,
    stride: int,
    threads: int = 1,
) -> FeatureVolume:
    """Build the difference volume for one level of a rectified pair.

    d_max is the search range in full-resolution pixels (of the matcher's
    working resolution); the bin count is ceil(d_max / (divisor * stride)).
    """
    if left.index != right.index:
        raise ValueError(f"levels disagree: left k={left.index}, right k={right.index}")
    if (left.height, left.width) != (right.height, right.width):
        raise ValueError(
            f"level shapes disagree: {(left.height, left.width)} vs {(right.height, right.width)}"
        )
    if left.channel_kinds != right.channel_kinds:
        raise ValueError("left/right descriptor layouts disagree")
    if stride < 1 or int(stride) != stride:
        raise ConfigError(f"stride must be an integer >= 1, got {stride!r}")
    stride = int(stride)
    bins = n_bins_for(d_max, left.divisor, stride)

    f_l = left.materialize()
    f_r = right.materialize()
    c, h, w = f_l.shape
    data = np.empty((c, bins, h, w), dtype=np.float32)
    reach = np.empty((bins, w), dtype=bool)
    xs = np.arange(w)

    def one_bin(d: int) -> None:
        shift = d * stride
        if shift == 0:
            data[:, d] = f_l - f_r
        else:
            idx = np.maximum(xs - shift, 0)
            data[:, d] = f_l - f_r[:, :, idx]
        reach[d] = xs >= shift

    run_indexed(bins, threads, one_bin)
    assert bins * stride * left.divisor >= d_max
    return FeatureVolume(
        scale_index=left.index,
        stride=stride,
        divisor=left.divisor,
        data=data,
        reach=reach,
        channel_kinds=left.channel_kinds,
    )
