"""Disparity metrics, the depth-range protocol, and robustness sweeps.

Metrics follow the stereo-benchmark conventions: bad-tau percentages,
average absolute error, RMS error, and nearest-rank error quantiles.
The depth protocol converts ground-truth disparity to metric depth and
scores three stopping-distance bands (0-25 m, 25-60 m, 60-115 m)
separately, since a fixed pixel error costs quadratically more meters
at long range.

All means use math.fsum so results are independent of summation order
and reproducible bit for bit against a naive per-pixel oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .raster_io import DisparityMap

__all__ = [
    "Metrics",
    "EvalReport",
    "RANGE_BOUNDS",
    "DEFAULT_TAUS",
    "compute_metrics",
    "disparity_to_depth",
    "depth_error",
    "evaluate_protocol",
    "robustness_sweep",
    "metrics_csv",
    "ROTATION_GRID",
    "YTRANS_GRID",
    "OCCLUSION_GRID",
]

DEFAULT_TAUS = (1.0, 2.0, 4.0)
QUANTILES = (90, 95, 99)

# Stopping-distance bands in meters, [lo, hi).  Pixels mapping beyond
# the last band (or to infinite depth at zero disparity) only count in
# the 'All' row.
RANGE_BOUNDS = {"S": (0.0, 25.0), "M": (25.0, 60.0), "L": (60.0, 115.0)}

ROTATION_GRID = tuple(i * 0.05 for i in range(9))  # degrees
YTRANS_GRID = tuple(i * 0.5 for i in range(9))  # pixels
OCCLUSION_GRID = tuple(i * 25 for i in range(9))  # patch side, pixels


@dataclass
class Metrics:
    """Error statistics over one evaluation mask.

    bad maps threshold (px) to the percentage of evaluated pixels whose
    error exceeds it; pixels the prediction left invalid count as bad at
    every threshold but are excluded from the magnitude statistics.
    n_valid is the pixel count behind avgerr/rms/quantiles.
    """

    bad: dict = field(default_factory=dict)
    avgerr: float = 0.0
    rms: float = 0.0
    quantiles: dict = field(default_factory=dict)
    n_valid: int = 0

    def __post_init__(self):
        taus = sorted(self.bad)
        for lo, hi in zip(taus, taus[1:]):
            assert self.bad[hi] <= self.bad[lo], "bad-tau must be nonincreasing in tau"
        assert self.rms >= self.avgerr >= 0.0 or math.isinf(self.avgerr), (
            "rms must dominate avgerr"
        )
        qs = sorted(self.quantiles)
        for lo, hi in zip(qs, qs[1:]):
            assert self.quantiles[hi] >= self.quantiles[lo], "quantiles must be nondecreasing"


def _metrics_over(pred: DisparityMap, gt: DisparityMap, mask: np.ndarray, taus) -> Metrics:
    n_eval = int(mask.sum())
    if n_eval == 0:
        raise ValueError("no valid pixels to evaluate")
    joint = mask & pred.valid
    n_joint = int(joint.sum())
    err = np.abs(
        pred.disparity[joint].astype(np.float64) - gt.disparity[joint].astype(np.float64)
    )
    n_missing = n_eval - n_joint

    bad = {}
    for tau in taus:
        n_bad = int((err > float(tau)).sum()) + n_missing
        bad[float(tau)] = 100.0 * n_bad / n_eval

    if n_joint == 0:
        # The prediction covered none of the mask: magnitude statistics
        # are undefined, reported as +Inf rather than a misleading 0.
        quantiles = {q: math.inf for q in QUANTILES}
        return Metrics(bad=bad, avgerr=math.inf, rms=math.inf, quantiles=quantiles, n_valid=0)

    avgerr = math.fsum(err) / n_joint
    rms = math.sqrt(math.fsum(err * err) / n_joint)
    ordered = np.sort(err)
    quantiles = {}
    for q in QUANTILES:
        rank = math.ceil(q / 100.0 * n_joint)  # 1-indexed nearest-rank
        quantiles[q] = float(ordered[max(rank, 1) - 1])
    return Metrics(bad=bad, avgerr=avgerr, rms=rms, quantiles=quantiles, n_valid=n_joint)


def compute_metrics(pred: DisparityMap, gt: DisparityMap, taus=DEFAULT_TAUS) -> Metrics:
    """Score a prediction against ground truth over the gt-valid pixels."""
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise ValueError(
            f"shape mismatch: pred {pred.height}x{pred.width} vs gt {gt.height}x{gt.width}"
        )
    return _metrics_over(pred, gt, gt.valid, taus)


def disparity_to_depth(d, baseline: float, focal: float):
    """Triangulate depth in meters: Z = baseline * focal / disparity."""
    if baseline <= 0 or focal <= 0:
        raise ValueError(f"baseline and focal must be positive, got {baseline}, {focal}")
    arr = np.asarray(d, dtype=np.float64)
    if (arr <= 0).any():
        raise ValueError("disparity must be positive to triangulate depth")
    out = baseline * focal / arr
    return float(out) if np.isscalar(d) or arr.ndim == 0 else out


def depth_error(z: float, delta_d: float, baseline: float, focal: float) -> float:
    """First-order depth uncertainty for a disparity error of delta_d pixels.

    Grows quadratically with depth: dZ = Z^2 * delta_d / (baseline * focal).
    """
    if z <= 0 or baseline <= 0 or focal <= 0:
        raise ValueError("depth, baseline and focal must be positive")
    if delta_d < 0:
        raise ValueError(f"delta_d must be nonnegative, got {delta_d}")
    return z * z * delta_d / (baseline * focal)


@dataclass
class EvalReport:
    """Per-band metrics plus the calibration that defined the bands.

    ranges holds Metrics under keys 'S', 'M', 'L' and 'All'; bands with
    no ground-truth pixels are absent rather than zero-filled.
    """

    ranges: dict
    baseline: float
    focal: float
    taus: tuple


def evaluate_protocol(
    pred: DisparityMap,
    gt: DisparityMap,
    baseline: float,
    focal: float,
    taus=DEFAULT_TAUS,
) -> EvalReport:
    """Partition gt-valid pixels by depth band and score each band.

    Depth comes from the ground-truth disparity; zero-disparity pixels
    (infinite depth) and anything past the last band are evaluated in
    'All' only.  Band masks are disjoint by construction.
    """
    if baseline <= 0 or focal <= 0:
        raise ValueError(f"baseline and focal must be positive, got {baseline}, {focal}")
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise ValueError("prediction and ground truth disagree in shape")
    if not gt.valid.any():
        raise ValueError("ground truth has no valid pixels")

    with np.errstate(divide="ignore"):
        z = np.where(
            gt.valid & (gt.disparity > 0),
            baseline * focal / np.where(gt.disparity > 0, gt.disparity, 1.0),
            np.inf,
        )
    ranges = {}
    for name, (lo, hi) in RANGE_BOUNDS.items():
        mask = gt.valid & (z >= lo) & (z < hi)
        if mask.any():
            ranges[name] = _metrics_over(pred, gt, mask, taus)
    ranges["All"] = _metrics_over(pred, gt, gt.valid, taus)
    return EvalReport(ranges=ranges, baseline=baseline, focal=focal, taus=tuple(taus))


def metrics_csv(ranges: dict, taus=DEFAULT_TAUS) -> str:
    """Render {range name: Metrics} as the benchmark CSV table."""
    cols = [_tau_label(t) for t in taus]
    header = "range," + ",".join(cols) + ",avgerr,rms,A90,A95,A99,n"
    lines = [header]
    for name in ("S", "M", "L", "All"):
        if name not in ranges:
            continue
        m = ranges[name]
        cells = [name]
        cells += [_fmt(m.bad[float(t)]) for t in taus]
        cells += [_fmt(m.avgerr), _fmt(m.rms)]
        cells += [_fmt(m.quantiles[q]) for q in QUANTILES]
        cells.append(str(m.n_valid))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _tau_label(tau) -> str:
    t = float(tau)
    return f"bad{int(t)}" if t.is_integer() else f"bad{t:g}"


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def robustness_sweep(run, left, right, gt: DisparityMap, kind: str, grid=None):
    """Measure avgerr as one target-view perturbation grows along a grid.

    run is a callable (left, right) -> DisparityMap (typically the
    stage-3 output of a matcher).  kind selects the perturbation family:
    'rotation' (degrees about center), 'ytrans' (pixels down), or
    'occlusion' (centered mean-filled square of the given side).  Only
    the target view is touched; grid point 0 is the exact unperturbed
    baseline.  Returns a list of (parameter, avgerr) pairs.
    """
    from .augment import asymmetric_mask, ydisparity_warp

    if kind == "rotation":
        grid = ROTATION_GRID if grid is None else grid
        perturb = lambda img, v: ydisparity_warp(img, rotation=v, ty=0.0)
    elif kind == "ytrans":
        grid = YTRANS_GRID if grid is None else grid
        perturb = lambda img, v: ydisparity_warp(img, rotation=0.0, ty=v)
    elif kind == "occlusion":
        grid = OCCLUSION_GRID if grid is None else grid

        def perturb(img, v):
            side = int(round(v))
            if side == 0:
                return img
            x0 = (img.width - side) // 2
            y0 = (img.height - side) // 2
            return asymmetric_mask(img, (x0, y0, side, side))
    else:
        raise ValueError(f"unknown sweep kind {kind!r} (have rotation, ytrans, occlusion)")

    curve = []
    for value in grid:
        pred = run(left, perturb(right, float(value)))
        m = compute_metrics(pred, gt, taus=(2.0,))
        curve.append((float(value), m.avgerr))
    return curve
