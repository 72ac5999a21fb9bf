"""Multi-scale loss and derivative-free search over decoder parameters.

The decoder has no trained weights.  Its free parameters (channel
weights, softmax temperature, filter mixes, window shapes) are searched
directly against the same objective a gradient trainer would use: a
smooth-L1 disparity loss evaluated at every pyramid level, with coarse
levels discounted by their disparity resolution,

    total = L1 + L2/4 + L3/16 + L4/64.

The search is cyclic coordinate descent.  Continuous parameters get a
golden-section line search (log-warped for scale-like quantities so the
span [0, 1024] is explored in ratios, not absolute steps); discrete
parameters get a grid sweep.  Only strict improvements are accepted, so
the loss trace is nonincreasing by construction.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .config import DIVISORS, ConfigError, DecoderConfig, MatcherConfig, aligned_d_max
from .pipeline import match_native_levels
from .raster_io import DisparityMap

__all__ = [
    "LEVEL_WEIGHTS",
    "LossBreakdown",
    "smooth_l1",
    "downsample_gt",
    "multiscale_loss",
    "TuneResult",
    "tune",
]

# Per-level loss weights, finest first: 1 / 4^(k-1).
LEVEL_WEIGHTS = (1.0, 1.0 / 4.0, 1.0 / 16.0, 1.0 / 64.0)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def smooth_l1(err: np.ndarray) -> np.ndarray:
    """Huber-style loss with delta = 1 px: 0.5 e^2 inside, |e| - 0.5 outside."""
    e = np.abs(np.asarray(err, dtype=np.float64))
    return np.where(e <= 1.0, 0.5 * e * e, e - 0.5)


def _block_sums(arr: np.ndarray, step: int) -> np.ndarray:
    rows = np.add.reduceat(arr, np.arange(0, arr.shape[0], step), axis=0)
    return np.add.reduceat(rows, np.arange(0, arr.shape[1], step), axis=1)


def downsample_gt(gt: DisparityMap, divisor: int) -> DisparityMap:
    """Valid-aware area downsampling of ground truth to one pyramid level.

    Each output pixel averages the valid source pixels of its divisor x
    divisor block (ragged edge blocks are smaller) and divides by the
    divisor so the values land in level-pixel disparity units.  An
    output pixel is valid iff at least half of its source pixels are.
    """
    if divisor < 1:
        raise ValueError(f"divisor must be >= 1, got {divisor}")
    vals = np.where(gt.valid, gt.disparity.astype(np.float64), 0.0)
    sums = _block_sums(vals, divisor)
    counts = _block_sums(gt.valid.astype(np.float64), divisor)
    totals = _block_sums(np.ones(gt.disparity.shape, dtype=np.float64), divisor)
    valid = counts >= 0.5 * totals
    out = np.zeros(sums.shape, dtype=np.float64)
    nonzero = counts > 0
    out[nonzero] = sums[nonzero] / counts[nonzero] / divisor
    return DisparityMap(disparity=out.astype(np.float32), valid=valid & nonzero)


@dataclass(frozen=True)
class LossBreakdown:
    """Per-level smooth-L1 losses (px, finest first) and their weighted total."""

    levels: tuple[float, float, float, float]
    total: float
    empty_levels: tuple[int, ...] = ()

    def __post_init__(self):
        if any(l < 0 for l in self.levels) or self.total < 0:
            raise ValueError("losses must be nonnegative")


def multiscale_loss(per_level_preds, gt: DisparityMap) -> LossBreakdown:
    """Combine per-level prediction errors into the pyramid training loss.

    per_level_preds maps level index (1 = finest) to that level's native
    readout, or is a 4-item sequence finest first.  Predictions are in
    level-pixel disparity units at level resolution; gt is at full
    resolution and is downsampled here.  A level with no jointly valid
    pixels contributes 0 and is listed in empty_levels.
    """
    if isinstance(per_level_preds, Mapping):
        preds = [per_level_preds[k] for k in (1, 2, 3, 4)]
    else:
        preds = list(per_level_preds)
    if len(preds) != 4:
        raise ValueError(f"need predictions for 4 levels, got {len(preds)}")

    levels = []
    empty = []
    for idx, pred in enumerate(preds):
        k = idx + 1
        gt_k = downsample_gt(gt, DIVISORS[idx])
        if (pred.height, pred.width) != (gt_k.height, gt_k.width):
            raise ValueError(
                f"level {k} prediction is {pred.height}x{pred.width}, "
                f"expected {gt_k.height}x{gt_k.width}"
            )
        joint = pred.valid & gt_k.valid
        if not joint.any():
            levels.append(0.0)
            empty.append(k)
            continue
        err = pred.disparity[joint].astype(np.float64) - gt_k.disparity[joint].astype(np.float64)
        levels.append(float(np.mean(smooth_l1(err))))
    l1, l2, l3, l4 = levels
    total = l1 + l2 / 4.0 + l3 / 16.0 + l4 / 64.0
    return LossBreakdown(levels=(l1, l2, l3, l4), total=total, empty_levels=tuple(empty))


# ---------------------------------------------------------------------------
# Coordinate-descent search
# ---------------------------------------------------------------------------

def _weight_to_unit(w: float) -> float:
    return math.log2(w + 1.0) / 10.0


def _unit_to_weight(u: float) -> float:
    return 2.0 ** (10.0 * min(max(u, 0.0), 1.0)) - 1.0


def _temp_to_unit(t: float) -> float:
    return (math.log2(t) + 6.0) / 9.0


def _unit_to_temp(u: float) -> float:
    return 2.0 ** (9.0 * min(max(u, 0.0), 1.0) - 6.0)


# (field, kind, extras).  Continuous entries carry (to_unit, from_unit)
# transforms; discrete entries carry their candidate grid.
_PARAM_SPACE = [
    ("weight_intensity", "continuous", (_weight_to_unit, _unit_to_weight)),
    ("weight_gradient", "continuous", (_weight_to_unit, _unit_to_weight)),
    ("weight_rank", "continuous", (_weight_to_unit, _unit_to_weight)),
    ("weight_context", "continuous", (_weight_to_unit, _unit_to_weight)),
    ("softmax_temperature", "continuous", (_temp_to_unit, _unit_to_temp)),
    ("vpp_mix", "continuous", (lambda v: v, lambda u: min(max(u, 0.0), 1.0))),
    ("residual_mix", "continuous", (lambda v: v, lambda u: min(max(u, 0.0), 1.0))),
    ("agg_blocks", "discrete", (0, 1, 2, 3, 4)),
    ("box_window", "discrete", ((1, 3, 3), (3, 3, 3), (1, 5, 5), (3, 5, 5))),
]


@dataclass
class TuneResult:
    """Outcome of a tune run: best config, accepted-loss trace, bookkeeping."""

    config: DecoderConfig
    trace: list
    evals_used: int
    steps: list  # (eval_count, param, value, loss) per accepted step


def _normalize_scene(entry):
    if hasattr(entry, "left") and hasattr(entry, "right") and hasattr(entry, "gt"):
        return entry.left, entry.right, entry.gt
    if len(entry) == 3:
        return entry[0], entry[1], entry[2]
    if len(entry) == 2:
        (left, right), gt = entry
        return left, right, gt
    raise ValueError("dataset entries must be (left, right, gt) or ((left, right), gt)")


def tune(
    initial: DecoderConfig,
    dataset,
    budget_evals: int,
    base: MatcherConfig | None = None,
    params=None,
) -> TuneResult:
    """Cyclic coordinate descent on the mean multi-scale loss of a dataset.

    Each candidate decoder config costs one budget unit per dataset pass
    (repeated configs are served from a cache for free).  Only strictly
    better candidates are accepted, so the returned config is never
    worse than the input; budget 0 returns the input untouched.  base
    supplies the matcher context (search range, strides); when omitted
    it is inferred from the dataset's ground-truth range.
    """
    scenes = [_normalize_scene(e) for e in dataset]
    if not scenes:
        raise ValueError("dataset must not be empty")
    initial.validate()
    if budget_evals <= 0:
        return TuneResult(config=initial, trace=[], evals_used=0, steps=[])

    if base is None:
        d_top = 0.0
        for _, _, gt in scenes:
            if gt.valid.any():
                d_top = max(d_top, float(gt.disparity[gt.valid].max()))
        if d_top <= 0:
            raise ValueError("dataset ground truth has no valid pixels")
        base = MatcherConfig(d_max=aligned_d_max(d_top))

    space = _PARAM_SPACE if params is None else [p for p in _PARAM_SPACE if p[0] in set(params)]
    if params is not None and len(space) != len(set(params)):
        known = {name for name, _, _ in _PARAM_SPACE}
        raise ConfigError(f"unknown tuning parameters: {sorted(set(params) - known)}")

    cache: dict[tuple, float] = {}
    state = {"evals": 0}

    def objective(dec: DecoderConfig) -> float:
        key = dataclasses.astuple(dec)
        if key in cache:
            return cache[key]
        if state["evals"] >= budget_evals:
            raise _BudgetExhausted
        state["evals"] += 1
        cfg = dataclasses.replace(base, decoder=dec)
        totals = []
        for left, right, gt in scenes:
            preds = match_native_levels(left, right, cfg)
            totals.append(multiscale_loss(preds, gt).total)
        val = float(np.mean(totals))
        cache[key] = val
        return val

    current = initial
    try:
        best_loss = objective(current)
    except _BudgetExhausted:
        return TuneResult(config=initial, trace=[], evals_used=state["evals"], steps=[])
    trace = [best_loss]
    steps = [(state["evals"], "initial", None, best_loss)]

    def try_accept(name, value, loss):
        nonlocal current, best_loss
        if loss < best_loss:
            current = dataclasses.replace(current, **{name: value})
            best_loss = loss
            trace.append(loss)
            steps.append((state["evals"], name, value, loss))
            return True
        return False

    try:
        improved = True
        while improved:
            improved = False
            for name, kind, extra in space:
                if kind == "discrete":
                    for cand in extra:
                        if cand == getattr(current, name):
                            continue
                        loss = objective(dataclasses.replace(current, **{name: cand}))
                        improved |= try_accept(name, cand, loss)
                    continue
                to_unit, from_unit = extra
                best_u, best_f = _line_search(
                    lambda u: objective(
                        dataclasses.replace(current, **{name: from_unit(u)})
                    ),
                    to_unit(getattr(current, name)),
                )
                improved |= try_accept(name, from_unit(best_u), best_f)
    except _BudgetExhausted:
        pass
    return TuneResult(config=current, trace=trace, evals_used=state["evals"], steps=steps)


class _BudgetExhausted(Exception):
    pass


def _line_search(f, u0: float, iters: int = 8) -> tuple[float, float]:
    """Golden-section search on [0, 1] plus the endpoints and start point.

    Returns the best (u, f(u)) among everything evaluated.  Endpoints
    are probed explicitly because scale-like parameters often want to
    sit exactly at a bound (a channel weight at 0 switches the channel
    family off entirely).
    """
    seen = []

    def probe(u):
        val = f(u)
        seen.append((val, u))
        return val

    probe(min(max(u0, 0.0), 1.0))
    probe(0.0)
    probe(1.0)
    lo, hi = 0.0, 1.0
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = probe(x1), probe(x2)
    for _ in range(iters):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = probe(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = probe(x2)
    best_f, best_u = min(seen, key=lambda t: (t[0], t[1]))
    return best_u, best_f
