"""Descriptor pyramid extraction.

Each stereo view is reduced to a four-level pyramid of dense descriptor
maps at spatial divisors 8, 16, 32 and 64.  Descriptors are deterministic
image statistics rather than learned features: intensity, horizontal and
vertical gradients, a local rank score, plus box-pooled context copies of
those four at growing windows.  Pooled context is stored at its native
coarse grid resolution and materialized to per-pixel maps on demand.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import DIVISORS, ConfigError, EncoderConfig
from .raster_io import Image

__all__ = [
    "FeatureLevel",
    "FeaturePyramid",
    "to_gray",
    "downsample_half",
    "rank_transform",
    "pooled_context",
    "extract_descriptors",
    "build_feature_pyramid",
    "MIN_INPUT_SIZE",
]

MIN_INPUT_SIZE = 64

_BASE_KINDS = ("intensity", "gradient", "gradient", "rank")


def to_gray(data: np.ndarray) -> np.ndarray:
    """Collapse (H, W, 3) to luma with BT.601 weights; pass 2-D through."""
    if data.ndim == 2:
        return np.asarray(data, dtype=np.float32)
    w = np.array([0.299, 0.587, 0.114], dtype=np.float32)
    return np.einsum("hwc,c->hw", data.astype(np.float32, copy=False), w)


def _half_array(arr: np.ndarray) -> np.ndarray:
    """2x2 area-mean downsample; odd sizes replicate the trailing row/col."""
    h, w = arr.shape[0], arr.shape[1]
    if h < 2 or w < 2:
        raise ValueError(f"cannot halve a {h}x{w} array; both sides must be >= 2")
    pad = [(0, h % 2), (0, w % 2)] + [(0, 0)] * (arr.ndim - 2)
    if h % 2 or w % 2:
        arr = np.pad(arr, pad, mode="edge")
    h2, w2 = arr.shape[0] // 2, arr.shape[1] // 2
    shaped = arr.reshape((h2, 2, w2, 2) + arr.shape[2:])
    return shaped.mean(axis=(1, 3), dtype=arr.dtype if arr.dtype.kind == "f" else np.float32)


def downsample_half(image: Image) -> Image:
    """Halve an Image by 2x2 area averaging."""
    return Image(data=_half_array(image.data), pfm_scale=image.pfm_scale)


def _gradients(gray: np.ndarray, step: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradients (one-sided at borders), zero for 1-px axes.

    step is the sample spacing in full-resolution pixels, so every pyramid
    level reports the same physical quantity; without it a coarse level's
    gradients would be step-times larger than the fine level's and the
    cross-level fusion would no longer mix channels of comparable magnitude.
    """
    h, w = gray.shape
    gx = np.gradient(gray, step, axis=1) if w >= 2 else np.zeros_like(gray)
    gy = np.gradient(gray, step, axis=0) if h >= 2 else np.zeros_like(gray)
    return gx.astype(np.float32, copy=False), gy.astype(np.float32, copy=False)


def rank_transform(gray: np.ndarray, window: int = 5) -> np.ndarray:
    """Fraction of in-window neighbors strictly darker than the center pixel.

    The window is clipped at image borders and the center is excluded, so
    scores stay in [0, 1] everywhere and depend only on the intensity
    ordering: any strictly increasing remap of the input leaves the
    output unchanged.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError(f"rank window must be odd and >= 3, got {window}")
    gray = np.asarray(gray, dtype=np.float32)
    h, w = gray.shape
    r = window // 2
    count = np.zeros((h, w), dtype=np.float32)
    denom = np.zeros((h, w), dtype=np.float32)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy == 0 and dx == 0:
                continue
            ys0, ys1 = max(0, -dy), min(h, h - dy)
            xs0, xs1 = max(0, -dx), min(w, w - dx)
            if ys0 >= ys1 or xs0 >= xs1:
                continue
            center = gray[ys0:ys1, xs0:xs1]
            neighbor = gray[ys0 + dy : ys1 + dy, xs0 + dx : xs1 + dx]
            count[ys0:ys1, xs0:xs1] += (neighbor < center).astype(np.float32)
            denom[ys0:ys1, xs0:xs1] += 1.0
    np.maximum(denom, 1.0, out=denom)
    return count / denom


def _grid_mean(channel: np.ndarray, window: int) -> np.ndarray:
    """Mean over a ceil(H/w) x ceil(W/w) grid of w x w cells (partial at edges)."""
    h, w = channel.shape
    row_idx = np.arange(0, h, window)
    col_idx = np.arange(0, w, window)
    sums = np.add.reduceat(np.add.reduceat(channel.astype(np.float64), row_idx, axis=0), col_idx, axis=1)
    row_sz = np.minimum(row_idx + window, h) - row_idx
    col_sz = np.minimum(col_idx + window, w) - col_idx
    counts = np.outer(row_sz, col_sz)
    return (sums / counts).astype(np.float32)


def _broadcast_grid(grid: np.ndarray, window: int, out_hw: tuple[int, int]) -> np.ndarray:
    """Materialize a pooled grid back to pixel resolution (nearest cell)."""
    rep = np.repeat(np.repeat(grid, window, axis=0), window, axis=1)
    return rep[: out_hw[0], : out_hw[1]]


def pooled_context(channel: np.ndarray, windows) -> list[tuple[int, np.ndarray]]:
    """Box-pool one channel over each window size, kept at grid resolution.

    Windows larger than both image sides are skipped with a warning; the
    result is a list of (window, grid) pairs for the windows that apply.
    """
    h, w = channel.shape
    out = []
    for win in windows:
        if win < 1:
            raise ValueError(f"pooling window must be >= 1, got {win}")
        if win > h and win > w:
            warnings.warn(
                f"pooling window {win} exceeds the {h}x{w} channel; skipped",
                stacklevel=2,
            )
            continue
        out.append((win, _grid_mean(channel, win)))
    return out


@dataclass
class FeatureLevel:
    """Dense descriptors for one pyramid level.

    base holds the four full-resolution channels (at this level's working
    resolution); context holds (window, source_index, grid) triples at
    native pooled resolution.  materialize() expands everything into one
    (C, H, W) array, cached after the first call.
    """

    index: int  # 1 = finest .. 4 = coarsest
    divisor: int
    base: np.ndarray  # (4, H, W) float32
    context: list[tuple[int, int, np.ndarray]] = field(default_factory=list)
    _dense: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def height(self) -> int:
        return self.base.shape[1]

    @property
    def width(self) -> int:
        return self.base.shape[2]

    @property
    def n_channels(self) -> int:
        return 4 + len(self.context)

    @property
    def channel_kinds(self) -> tuple[str, ...]:
        return _BASE_KINDS + ("context",) * len(self.context)

    def materialize(self) -> np.ndarray:
        if self._dense is None:
            maps = [self.base[i] for i in range(4)]
            hw = (self.height, self.width)
            for window, _, grid in self.context:
                maps.append(_broadcast_grid(grid, window, hw))
            self._dense = np.stack(maps, axis=0)
        return self._dense


@dataclass
class FeaturePyramid:
    levels: tuple[FeatureLevel, FeatureLevel, FeatureLevel, FeatureLevel]
    original_hw: tuple[int, int]

    def level(self, index: int) -> FeatureLevel:
        if not 1 <= index <= 4:
            raise ValueError(f"level index must be in 1..4, got {index}")
        return self.levels[index - 1]


def _context_plan(n_channels: int, cfg: EncoderConfig) -> list[tuple[int, int]]:
    """(window, source_index) pairs filling the non-base channel slots.

    Windows walk the configured set in ascending order and keep doubling
    past its end; sources cycle intensity, gx, gy, rank within a window.
    """
    slots = n_channels - 4
    plan: list[tuple[int, int]] = []
    windows = sorted(set(cfg.context_windows))
    wi = 0
    while len(plan) < slots:
        if wi < len(windows):
            win = windows[wi]
        else:
            win = windows[-1] * (2 ** (wi - len(windows) + 1))
        wi += 1
        for src in range(4):
            if len(plan) >= slots:
                break
            plan.append((win, src))
    return plan


def extract_descriptors(image, level_index: int, cfg: EncoderConfig | None = None) -> FeatureLevel:
    """Compute one level's descriptors from an image at working resolution.

    Accepts an Image (grayscale or RGB) or a 2-D array.  The channel count
    comes from cfg.channels[level_index - 1].
    """
    cfg = cfg or EncoderConfig()
    cfg.validate()
    if not 1 <= level_index <= 4:
        raise ConfigError(f"level index must be in 1..4, got {level_index}")
    n_channels = cfg.channels[level_index - 1]

    gray = to_gray(image.data if isinstance(image, Image) else np.asarray(image))
    gx, gy = _gradients(gray, float(DIVISORS[level_index - 1]))
    rank = rank_transform(gray, cfg.rank_window)
    base = np.stack(
        [
            gray * np.float32(cfg.gain_intensity),
            gx * np.float32(cfg.gain_gradient),
            gy * np.float32(cfg.gain_gradient),
            rank * np.float32(cfg.gain_rank),
        ],
        axis=0,
    )

    context = []
    for window, src in _context_plan(n_channels, cfg):
        # Clamp instead of skipping so the channel budget is always met;
        # oversized windows degenerate to a single global-mean cell.
        grid = _grid_mean(base[src], min(window, max(gray.shape)))
        if cfg.gain_context != 1.0:
            grid = grid * np.float32(cfg.gain_context)
        context.append((min(window, max(gray.shape)), src, grid))

    return FeatureLevel(index=level_index, divisor=DIVISORS[level_index - 1], base=base, context=context)


def build_feature_pyramid(image: Image, cfg: EncoderConfig | None = None) -> FeaturePyramid:
    """Build the four-level descriptor pyramid for one view.

    The image is grayscaled once, then repeatedly halved by area
    averaging; descriptors are extracted at divisors 8, 16, 32, 64.
    Inputs smaller than 64 px on either side are rejected.
    """
    cfg = cfg or EncoderConfig()
    cfg.validate()
    if image.height < MIN_INPUT_SIZE or image.width < MIN_INPUT_SIZE:
        raise ValueError(
            f"input {image.height}x{image.width} is smaller than the minimum "
            f"{MIN_INPUT_SIZE}x{MIN_INPUT_SIZE}"
        )
    gray = to_gray(image.data)
    arr = gray
    levels = []
    for halvings in range(1, 7):
        arr = _half_array(arr)
        if halvings >= 3:  # divisors 8, 16, 32, 64
            level_index = halvings - 2
            level = extract_descriptors(arr, level_index, cfg)
            expect_h = math.ceil(image.height / DIVISORS[level_index - 1])
            expect_w = math.ceil(image.width / DIVISORS[level_index - 1])
            assert (level.height, level.width) == (expect_h, expect_w)
            levels.append(level)
    return FeaturePyramid(levels=tuple(levels), original_hw=(image.height, image.width))
