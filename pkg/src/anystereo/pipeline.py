"""Coarse-to-fine anytime matching pipeline.

A match run builds descriptor pyramids for both views, then walks the
volume pyramid from coarse to fine.  The coarsest level (k=4) only seeds
fusion; levels 3, 2, 1 are stages 1, 2, 3 and each emits a disparity
report.  Stage 1 always completes; after that, a stage only starts if
its predecessor finished within the latency budget.  Finer-level volumes
are never touched by earlier stages, so a budget-halted run does
strictly less work (asserted via the work counter and trace events).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .config import ConfigError, MatcherConfig
from .decoder import (
    CostVolume,
    aggregate,
    expected_disparity,
    to_cost_volume,
    upsample_add_cost,
    upsample_fuse,
    volumetric_pyramid_pool,
)
from .encoder import build_feature_pyramid, downsample_half
from .raster_io import DisparityMap, Image
from .volume import FeatureVolume, build_feature_volume, stride_for_level

__all__ = [
    "StageReport",
    "match",
    "match_at_resolution",
    "match_single_scale",
    "match_native_levels",
    "stopping_distance",
    "MODE_FACTORS",
]

MODE_FACTORS = {"F": 1, "H": 2, "Q": 4}

# Report-emitting levels in execution order: level 3 is stage 1, etc.
_STAGE_OF_LEVEL = {3: 1, 2: 2, 1: 3}


@dataclass
class StageReport:
    """One on-demand disparity report.

    disparity is at the original input resolution in original-resolution
    pixel units regardless of input_mode.  work_cells counts volume cells
    processed since the start of the run (cumulative across stages).
    """

    stage: int
    level_index: int
    disparity: DisparityMap
    elapsed_ms: float
    work_cells: int


def stopping_distance(speed_mph: float) -> float:
    """Safe total stopping distance (m) for the supported speed tiers.

    These distances motivate the evaluation depth ranges: an object must
    be perceived correctly by the time it enters the stopping distance
    for the current speed.
    """
    table = {25: 25.0, 40: 60.0, 55: 115.0}
    key = int(speed_mph) if float(speed_mph).is_integer() else speed_mph
    if key not in table:
        raise ValueError(f"no stopping-distance entry for {speed_mph} mph (have 25, 40, 55)")
    return table[key]


class _Counter:
    __slots__ = ("cells",)

    def __init__(self):
        self.cells = 0

    def add(self, shape) -> None:
        n = 1
        for s in shape:
            n *= int(s)
        self.cells += n


def _trace(sink, event: str, level: int) -> None:
    if sink is not None:
        sink.append((event, level))


def _prescale(image: Image, factor: int) -> Image:
    out = image
    while factor > 1:
        out = downsample_half(out)
        factor //= 2
    return out


def _decode_level(
    pyr_l,
    pyr_r,
    k: int,
    cfg: MatcherConfig,
    d_work: float,
    prev_volume: FeatureVolume | None,
    counter: _Counter,
    trace,
) -> FeatureVolume:
    """Volume -> (optional feature fusion) -> aggregate -> pool for level k."""
    dec = cfg.decoder
    fv = build_feature_volume(
        pyr_l.level(k), pyr_r.level(k), d_work, stride_for_level(k, cfg.strides), cfg.threads
    )
    counter.add(fv.data.shape)
    _trace(trace, "volume", k)
    if dec.fuse_mode == "feature" and prev_volume is not None:
        fv = upsample_fuse(prev_volume, fv, dec)
        counter.add(fv.data.shape)
        _trace(trace, "fuse", k)
    if dec.agg_blocks > 0 and dec.residual_mix > 0:
        fv = aggregate(fv, dec, cfg.threads)
        counter.add((dec.agg_blocks,) + fv.data.shape)
        _trace(trace, "aggregate", k)
    if dec.vpp_mix > 0:
        fv = volumetric_pyramid_pool(fv, dec)
        counter.add(fv.data.shape)
        _trace(trace, "pool", k)
    return fv


def _level_cost(
    fv: FeatureVolume,
    cfg: MatcherConfig,
    prev_cost: CostVolume | None,
    counter: _Counter,
    trace,
) -> CostVolume:
    dec = cfg.decoder
    cost = to_cost_volume(fv, dec)
    counter.add(cost.cost.shape)
    _trace(trace, "cost", fv.scale_index)
    if dec.fuse_mode == "cost" and prev_cost is not None:
        cost = upsample_add_cost(prev_cost, cost)
        counter.add(cost.cost.shape)
        _trace(trace, "cost_fuse", fv.scale_index)
    return cost


def _readout(
    cost: CostVolume,
    out_hw: tuple[int, int],
    unit_scale: float,
    cfg: MatcherConfig,
    counter: _Counter,
    trace,
) -> DisparityMap:
    counter.add(cost.cost.shape[1:])
    counter.add(out_hw)
    _trace(trace, "readout", cost.scale_index)
    return expected_disparity(
        cost, cfg.decoder.softmax_temperature, out_hw=out_hw, unit_scale=unit_scale
    )


def _validate_pair(left: Image, right: Image, cfg: MatcherConfig) -> None:
    cfg.validate()
    if (left.height, left.width) != (right.height, right.width):
        raise ValueError(
            f"image dimensions disagree: {left.height}x{left.width} vs {right.height}x{right.width}"
        )
    if cfg.d_max >= left.width:
        raise ConfigError(f"d_max {cfg.d_max} must be smaller than image width {left.width}")


def match(
    left: Image,
    right: Image,
    cfg: MatcherConfig,
    budget_ms: float | None = None,
    on_report=None,
    trace=None,
) -> list[StageReport]:
    """Run the staged matcher; returns one StageReport per completed stage.

    budget_ms is checked between stages only: stage 1 always completes,
    and a later stage starts only if the previous one finished within
    budget.  on_report, when given, is called with each report as soon
    as it exists.  trace, when given, collects (event, level) tuples for
    laziness assertions.
    """
    _validate_pair(left, right, cfg)
    t0 = time.perf_counter()
    factor = MODE_FACTORS[cfg.input_mode]
    work_l = _prescale(left, factor)
    work_r = _prescale(right, factor)
    d_work = cfg.d_max / factor
    out_hw = (left.height, left.width)

    counter = _Counter()
    pyr_l = build_feature_pyramid(work_l, cfg.encoder)
    pyr_r = build_feature_pyramid(work_r, cfg.encoder)
    _trace(trace, "descriptors", 0)

    reports: list[StageReport] = []
    prev_volume: FeatureVolume | None = None
    prev_cost: CostVolume | None = None

    # Level 4: fusion seed only, no report.
    fv4 = _decode_level(pyr_l, pyr_r, 4, cfg, d_work, None, counter, trace)
    prev_volume = fv4
    if cfg.decoder.fuse_mode == "cost":
        prev_cost = _level_cost(fv4, cfg, None, counter, trace)

    for k in (3, 2, 1):
        stage = _STAGE_OF_LEVEL[k]
        if stage > cfg.stages_enabled:
            break
        if stage > 1 and budget_ms is not None:
            elapsed = (time.perf_counter() - t0) * 1000.0
            if elapsed > budget_ms:
                break
        fv = _decode_level(pyr_l, pyr_r, k, cfg, d_work, prev_volume, counter, trace)
        cost = _level_cost(fv, cfg, prev_cost, counter, trace)
        prev_volume, prev_cost = fv, cost
        disparity = _readout(cost, out_hw, float(factor), cfg, counter, trace)
        report = StageReport(
            stage=stage,
            level_index=k,
            disparity=disparity,
            elapsed_ms=(time.perf_counter() - t0) * 1000.0,
            work_cells=counter.cells,
        )
        reports.append(report)
        if on_report is not None:
            on_report(report)
    return reports


def match_at_resolution(
    left: Image,
    right: Image,
    cfg: MatcherConfig,
    budget_ms: float | None = None,
    on_report=None,
    trace=None,
) -> list[StageReport]:
    """match() under the config's input_mode; reports stay in original units.

    H and Q modes pre-scale both views by area averaging (1/2, 1/4),
    scale the search range identically, and rescale output disparities
    back to original-resolution pixels.
    """
    return match(left, right, cfg, budget_ms=budget_ms, on_report=on_report, trace=trace)


def match_single_scale(
    left: Image,
    right: Image,
    cfg: MatcherConfig,
    trace=None,
) -> StageReport:
    """Finest-level-only baseline: same descriptors, no coarse context.

    Builds only the level-1 volume (no fusion from above) and reads it
    out directly.  Serves as the single-scale reference in robustness
    comparisons.
    """
    _validate_pair(left, right, cfg)
    t0 = time.perf_counter()
    factor = MODE_FACTORS[cfg.input_mode]
    work_l = _prescale(left, factor)
    work_r = _prescale(right, factor)
    d_work = cfg.d_max / factor
    out_hw = (left.height, left.width)

    counter = _Counter()
    pyr_l = build_feature_pyramid(work_l, cfg.encoder)
    pyr_r = build_feature_pyramid(work_r, cfg.encoder)
    fv = _decode_level(pyr_l, pyr_r, 1, cfg, d_work, None, counter, trace)
    cost = _level_cost(fv, cfg, None, counter, trace)
    disparity = _readout(cost, out_hw, float(factor), cfg, counter, trace)
    return StageReport(
        stage=1,
        level_index=1,
        disparity=disparity,
        elapsed_ms=(time.perf_counter() - t0) * 1000.0,
        work_cells=counter.cells,
    )


def match_native_levels(
    left: Image,
    right: Image,
    cfg: MatcherConfig,
) -> dict[int, DisparityMap]:
    """Run all four levels and read each out at native resolution and units.

    Returns {level k: DisparityMap of shape (H_k, W_k) in level-pixel
    disparity units}.  This is the prediction set the multi-scale loss
    consumes; no budget applies.
    """
    _validate_pair(left, right, cfg)
    factor = MODE_FACTORS[cfg.input_mode]
    work_l = _prescale(left, factor)
    work_r = _prescale(right, factor)
    d_work = cfg.d_max / factor

    counter = _Counter()
    pyr_l = build_feature_pyramid(work_l, cfg.encoder)
    pyr_r = build_feature_pyramid(work_r, cfg.encoder)

    out: dict[int, DisparityMap] = {}
    prev_volume: FeatureVolume | None = None
    prev_cost: CostVolume | None = None
    for k in (4, 3, 2, 1):
        fv = _decode_level(pyr_l, pyr_r, k, cfg, d_work, prev_volume, counter, trace=None)
        cost = _level_cost(fv, cfg, prev_cost, counter, trace=None)
        prev_volume, prev_cost = fv, cost
        out[k] = expected_disparity(cost, cfg.decoder.softmax_temperature, native_units=True)
    return out
