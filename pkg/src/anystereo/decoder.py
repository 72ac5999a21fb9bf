"""Feature volume filtering and disparity readout.

The decoder turns a raw feature volume into a cost volume in four steps:
residual box-filter aggregation, volumetric pyramid pooling, optional
fusion with the upsampled volume from the coarser level, and weighted-L1
reduction over channels.  Disparities are read out as the expected value
of a softmax over negated costs (soft argmin), scaled to full-resolution
pixel units.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .config import ConfigError, DecoderConfig
from .interp import halfpixel_coords, resample_axis_linear, resize_bilinear
from .parallel import run_indexed
from .raster_io import DisparityMap
from .volume import FeatureVolume

__all__ = [
    "CostVolume",
    "aggregate",
    "volumetric_pyramid_pool",
    "upsample_fuse",
    "upsample_add_cost",
    "to_cost_volume",
    "expected_disparity",
]


@dataclass
class CostVolume:
    """Scalar matching costs over (disparity bin, y, x); lower is better."""

    scale_index: int
    stride: int
    divisor: int
    cost: np.ndarray  # (D, H, W) float
    reach: np.ndarray  # (D, W) bool

    @property
    def n_bins(self) -> int:
        return self.cost.shape[0]

    @property
    def height(self) -> int:
        return self.cost.shape[1]

    @property
    def width(self) -> int:
        return self.cost.shape[2]

    @property
    def bin_unit(self) -> int:
        return self.stride * self.divisor


def aggregate(volume: FeatureVolume, cfg: DecoderConfig, threads: int = 1) -> FeatureVolume:
    """Residual box filtering: R rounds of V <- (1-a)*V + a*box(V).

    The box window (w_d, w_y, w_x) runs over (disparity, y, x) per channel
    with replicate borders, so constants map to themselves and the output
    range never leaves [min, max] of the input.
    """
    cfg.validate()
    if cfg.agg_blocks == 0 or cfg.residual_mix == 0.0:
        return volume
    alpha = np.float32(cfg.residual_mix)
    keep = np.float32(1.0) - alpha
    data = volume.data
    size = tuple(cfg.box_window)
    for _ in range(cfg.agg_blocks):
        filtered = np.empty_like(data)

        def one_channel(c: int) -> None:
            ndimage.uniform_filter(data[c], size=size, output=filtered[c], mode="nearest")

        run_indexed(data.shape[0], threads, one_channel)
        data = keep * data + alpha * filtered
    return volume.replaced(data)


def volumetric_pyramid_pool(volume: FeatureVolume, cfg: DecoderConfig) -> FeatureVolume:
    """Multi-grid average pooling over (y, x) with full disparity extent.

    Each grid size g partitions the spatial plane into g x g cells (sizes
    as equal as possible); cell means over (d, cell) are broadcast back
    and averaged across grids, then blended: (1-g_mix)*V + g_mix*pooled.
    Grids larger than either spatial side are skipped with a warning.
    """
    cfg.validate()
    if cfg.vpp_mix == 0.0:
        return volume
    data = volume.data
    c, d, h, w = data.shape
    # Mean over d first: every pixel has the same bin count, so the cell
    # mean of per-pixel d-means equals the mean over the full 3D cell.
    dmean = data.mean(axis=1, dtype=np.float64)

    pooled_sum = np.zeros((c, h, w), dtype=np.float64)
    n_grids = 0
    for g in cfg.vpp_windows:
        if g > h or g > w:
            warnings.warn(f"vpp grid {g} exceeds the {h}x{w} volume; skipped", stacklevel=2)
            continue
        row_parts = np.array_split(np.arange(h), g)
        col_parts = np.array_split(np.arange(w), g)
        row_idx = np.array([p[0] for p in row_parts])
        col_idx = np.array([p[0] for p in col_parts])
        sums = np.add.reduceat(np.add.reduceat(dmean, row_idx, axis=1), col_idx, axis=2)
        counts = np.outer([len(p) for p in row_parts], [len(p) for p in col_parts])
        cells = sums / counts
        row_map = np.concatenate([np.full(len(p), i, dtype=np.intp) for i, p in enumerate(row_parts)])
        col_map = np.concatenate([np.full(len(p), i, dtype=np.intp) for i, p in enumerate(col_parts)])
        pooled_sum += cells[:, row_map][:, :, col_map]
        n_grids += 1
    if n_grids == 0:
        warnings.warn("all vpp grids exceeded the volume; pooling skipped", stacklevel=2)
        return volume
    pooled = (pooled_sum / n_grids).astype(np.float32)
    gamma = np.float32(cfg.vpp_mix)
    out = (np.float32(1.0) - gamma) * data + gamma * pooled[:, None, :, :]
    return volume.replaced(out)


def _resample_volume(data: np.ndarray, d_coords, y_coords, x_coords) -> np.ndarray:
    # The d axis extrapolates: a strided coarse level samples shifts only up
    # to (D-1)*unit, short of the fine level's top bins, and clamping there
    # would inject a constant slab with no zero crossing.  Continuing the
    # boundary segment linearly keeps a locally-linear signed volume (and
    # its zero crossing) correct past the last coarse sample.
    out = resample_axis_linear(data, d_coords, axis=1, extrapolate=True)
    out = resample_axis_linear(out, y_coords, axis=2)
    return resample_axis_linear(out, x_coords, axis=3)


def _fusion_coords(coarse_bins, coarse_unit, fine_bins, fine_unit, fine_hw, coarse_hw):
    """Coordinate grids mapping the fine lattice into the coarse one.

    Disparity bins are anchored at zero and spaced by the level's
    full-resolution bin unit, so the d-axis maps through physical
    disparity units; the spatial axes use the half-pixel convention.
    """
    ratio = fine_unit / coarse_unit
    d_coords = np.arange(fine_bins, dtype=np.float64) * ratio
    y_coords = halfpixel_coords(fine_hw[0], coarse_hw[0])
    x_coords = halfpixel_coords(fine_hw[1], coarse_hw[1])
    return d_coords, y_coords, x_coords


def upsample_fuse(coarse: FeatureVolume, fine: FeatureVolume, cfg: DecoderConfig) -> FeatureVolume:
    """Trilinearly upsample the coarse volume onto the fine grid and add.

    Channel mismatches must be an exact 2x factor (the 32 -> 16 boundary)
    and are resolved by averaging adjacent channel pairs before the
    spatial work.  The fine volume's reach mask is kept.
    """
    cfg.validate()
    if coarse.scale_index != fine.scale_index + 1:
        raise ValueError(
            f"fusion needs adjacent scales, got coarse k={coarse.scale_index} "
            f"into fine k={fine.scale_index}"
        )
    cdata = coarse.data
    if coarse.n_channels != fine.n_channels:
        if coarse.n_channels != 2 * fine.n_channels:
            raise ValueError(
                f"cannot reconcile {coarse.n_channels} coarse channels with "
                f"{fine.n_channels} fine channels"
            )
        c2 = fine.n_channels
        cdata = cdata.reshape(c2, 2, *cdata.shape[1:]).mean(axis=1, dtype=np.float32)
    d_coords, y_coords, x_coords = _fusion_coords(
        coarse.n_bins, coarse.bin_unit, fine.n_bins, fine.bin_unit,
        (fine.height, fine.width), (coarse.height, coarse.width),
    )
    up = _resample_volume(cdata, d_coords, y_coords, x_coords)
    return fine.replaced(fine.data + up)


def upsample_add_cost(coarse: CostVolume, fine: CostVolume) -> CostVolume:
    """Cost-domain fusion: upsample the coarse cost volume and add it."""
    if coarse.scale_index != fine.scale_index + 1:
        raise ValueError(
            f"fusion needs adjacent scales, got coarse k={coarse.scale_index} "
            f"into fine k={fine.scale_index}"
        )
    d_coords, y_coords, x_coords = _fusion_coords(
        coarse.n_bins, coarse.bin_unit, fine.n_bins, fine.bin_unit,
        (fine.height, fine.width), (coarse.height, coarse.width),
    )
    up = _resample_volume(coarse.cost[None], d_coords, y_coords, x_coords)[0]
    # Costs are nonnegative by construction; d-axis extrapolation of a
    # V-shaped column can dip below zero past the last coarse sample, so
    # floor the upsampled contribution before adding.
    np.maximum(up, 0.0, out=up)
    return CostVolume(
        scale_index=fine.scale_index,
        stride=fine.stride,
        divisor=fine.divisor,
        cost=fine.cost + up,
        reach=fine.reach,
    )


def to_cost_volume(volume: FeatureVolume, cfg: DecoderConfig) -> CostVolume:
    """Reduce channels to scalar cost: cost = sum_c w_c * |V[c]|.

    Unreachable (d, x) cells are set to their column's max finite cost
    plus one, so they stay finite but can never win the readout.
    """
    cfg.validate()
    weights = cfg.channel_weights(volume.channel_kinds)
    if len(weights) != volume.n_channels:
        raise ConfigError(
            f"weight vector length {len(weights)} != channel count {volume.n_channels}"
        )
    data = volume.data
    cost = np.zeros(data.shape[1:], dtype=np.float32)
    tmp = np.empty_like(cost)
    for c in range(volume.n_channels):
        np.abs(data[c], out=tmp)
        tmp *= weights[c]
        cost += tmp
    reach = volume.reach
    if not reach.all():
        mask = reach[:, None, :]
        col_max = np.where(mask, cost, -np.inf).max(axis=0)
        cost = np.where(mask, cost, (col_max + np.float32(1.0)).astype(np.float32))
    return CostVolume(
        scale_index=volume.scale_index,
        stride=volume.stride,
        divisor=volume.divisor,
        cost=cost,
        reach=reach,
    )


def expected_disparity(
    cv: CostVolume,
    beta: float,
    out_hw: tuple[int, int] | None = None,
    unit_scale: float = 1.0,
    native_units: bool = False,
) -> DisparityMap:
    """Soft-argmin readout of a cost volume.

    p(d) = softmax(-beta * cost) per column; the estimate is the
    probability-weighted mean bin index scaled into full-resolution
    pixel units (stride * divisor * unit_scale), or level pixels when
    native_units is set.  Costs are normalized by the column minimum
    first, which makes the readout exactly invariant to representable
    constant cost offsets.  When out_hw is given the map is bilinearly
    upsampled to that size.  Columns with no reachable bin are invalid.
    """
    if not beta > 0:
        raise ConfigError(f"softmax temperature must be > 0, got {beta}")
    cost = cv.cost
    dtype = cost.dtype if cost.dtype.kind == "f" else np.float32
    b = np.asarray(beta, dtype=dtype)
    m = cost.min(axis=0, keepdims=True)
    weights = np.exp(-b * (cost - m))
    denom = weights.sum(axis=0, dtype=dtype)
    bins = np.arange(cv.n_bins, dtype=dtype)
    numer = np.einsum("d,dhw->hw", bins, weights)
    est = numer / denom
    if native_units:
        scale = np.asarray(cv.stride, dtype=dtype)
    else:
        scale = np.asarray(cv.stride * cv.divisor * unit_scale, dtype=dtype)
    est = (est * scale).astype(np.float32)
    valid = np.broadcast_to(cv.reach.any(axis=0), est.shape)
    if out_hw is not None and tuple(out_hw) != est.shape:
        est = resize_bilinear(est, tuple(out_hw))
        iy = np.clip(np.floor(halfpixel_coords(out_hw[0], valid.shape[0]) + 0.5).astype(np.intp), 0, valid.shape[0] - 1)
        ix = np.clip(np.floor(halfpixel_coords(out_hw[1], valid.shape[1]) + 0.5).astype(np.intp), 0, valid.shape[1] - 1)
        valid = valid[iy][:, ix]
    return DisparityMap(disparity=est, valid=np.ascontiguousarray(valid))
