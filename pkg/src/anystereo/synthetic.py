"""Random-dot stereogram generation with exact ground truth.

Scenes are built backwards from the right view: a band-limited noise
texture *is* the right image, and the left image is synthesized by
sampling it at x - d(x, y) with bilinear weights.  That construction
makes the warp-consistency identity

    left[y, x] == sample(right, y, x - gt[y, x])

hold exactly at valid pixels for any disparity field, including subpixel
ones.  Pixels whose source falls off the image, and pixels occluded by a
nearer surface at a disparity step, are marked invalid in the ground
truth.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .interp import sample_bilinear
from .raster_io import DisparityMap, Image, save_disparity, save_image

__all__ = [
    "SyntheticScene",
    "generate",
    "export_scene",
    "DEFAULT_BASELINE",
    "DEFAULT_FOCAL",
    "DEFAULT_SMOOTH",
]

DEFAULT_BASELINE = 0.54  # meters
DEFAULT_FOCAL = 3578.0  # pixels

_KINDS = ("constant", "plane", "step", "two_plane")


@dataclass
class SyntheticScene:
    left: Image
    right: Image
    gt: DisparityMap
    descriptor: dict


def _texture(rng: np.random.Generator, hw: tuple[int, int], smooth) -> np.ndarray:
    """Uniform noise, optionally low-passed and re-stretched to [0, 1].

    Smoothing widens the autocorrelation of the dots so matching costs
    form smooth basins; the stretch restores full contrast afterwards.
    smooth is a single sigma or a (sigma_y, sigma_x) pair.  The default
    pair is strongly anisotropic: disparity is a horizontal search, so
    the horizontal band limit controls how cleanly descriptor
    differences cross zero at the true match, while vertical structure
    can stay fine without hurting that.
    """
    sy, sx = (smooth, smooth) if np.isscalar(smooth) else (smooth[0], smooth[1])
    if sy < 0 or sx < 0:
        raise ValueError(f"smoothing sigmas must be >= 0, got ({sy}, {sx})")
    tex = rng.random(hw, dtype=np.float64)
    if sy > 0 or sx > 0:
        tex = ndimage.gaussian_filter(tex, sigma=(sy, sx), mode="nearest")
        lo, hi = tex.min(), tex.max()
        if hi > lo:
            tex = (tex - lo) / (hi - lo)
    return tex.astype(np.float32)


_PARAM_KEYS = {
    "constant": {"d0"},
    "plane": {"a", "b", "c"},
    "step": {"d_left", "d_right", "split"},
    "two_plane": {"baseline", "focal", "near_z", "far_z", "split"},
}


def _disparity_field(kind: str, hw: tuple[int, int], params: dict) -> tuple[np.ndarray, dict]:
    h, w = hw
    unknown = set(params) - _PARAM_KEYS.get(kind, set(params))
    if unknown:
        raise ValueError(f"unknown {kind} parameter(s): {', '.join(sorted(unknown))}")
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    if kind == "constant":
        d0 = float(params.get("d0", 16.0))
        field = np.full(hw, d0, dtype=np.float64)
        meta = {"d0": d0}
    elif kind == "plane":
        a = float(params.get("a", 0.0))
        b = float(params.get("b", 0.0))
        c = float(params.get("c", 16.0))
        if a >= 1.0:
            raise ValueError(f"plane slope a={a} breaks left-to-right ordering (need a < 1)")
        field = a * xs + b * ys + c
        meta = {"a": a, "b": b, "c": c}
    elif kind in ("step", "two_plane"):
        if kind == "two_plane":
            baseline = float(params.get("baseline", DEFAULT_BASELINE))
            focal = float(params.get("focal", DEFAULT_FOCAL))
            near_z = float(params.get("near_z", 10.0))
            far_z = float(params.get("far_z", 100.0))
            d_near = baseline * focal / near_z
            d_far = baseline * focal / far_z
            meta = {
                "baseline": baseline,
                "focal": focal,
                "near_z": near_z,
                "far_z": far_z,
                "d_near": d_near,
                "d_far": d_far,
            }
        else:
            d_far = float(params.get("d_left", 8.0))
            d_near = float(params.get("d_right", 32.0))
            meta = {"d_left": d_far, "d_right": d_near}
        split = float(params.get("split", 0.5))
        if not 0.0 < split < 1.0:
            raise ValueError(f"split must be in (0, 1), got {split}")
        split_x = int(round(split * w))
        field = np.where(xs < split_x, d_far, d_near)
        meta["split_x"] = split_x
    else:
        raise ValueError(f"unknown scene kind {kind!r} (have {', '.join(_KINDS)})")
    if field.min() < 0:
        raise ValueError("disparity field has negative values")
    return field, meta


def _occlusion_mask(kind: str, field: np.ndarray, meta: dict) -> np.ndarray:
    """True where a left-view pixel is occluded by a nearer surface.

    Only the step kinds can occlude: when the right-side disparity is
    larger (nearer), far pixels in the band [split - (d_near - d_far),
    split) map to right-image locations the near surface also claims.
    """
    occluded = np.zeros(field.shape, dtype=bool)
    if kind in ("step", "two_plane"):
        split_x = meta["split_x"]
        if kind == "two_plane":
            d_far, d_near = meta["d_far"], meta["d_near"]
        else:
            d_far, d_near = meta["d_left"], meta["d_right"]
        if d_near > d_far:
            band = int(math.ceil(d_near - d_far))
            x0 = max(0, split_x - band)
            occluded[:, x0:split_x] = True
    return occluded


DEFAULT_SMOOTH = (8.0, 384.0)


def generate(
    kind: str,
    hw: tuple[int, int] = (512, 640),
    seed: int = 0,
    smooth=DEFAULT_SMOOTH,
    channels: int = 1,
    **params,
) -> SyntheticScene:
    """Generate a ground-truthed stereo pair.

    Kinds: 'constant' (d0), 'plane' (a*x + b*y + c), 'step' (d_left /
    d_right at a vertical split) and 'two_plane' (fronto-parallel planes
    at near_z / far_z meters under baseline/focal calibration).  The max
    disparity must stay below a quarter of the image width.  smooth is
    the texture band limit, isotropic or (sigma_y, sigma_x); pass 0 for
    raw dots.
    """
    h, w = int(hw[0]), int(hw[1])
    field, meta = _disparity_field(kind, (h, w), params)
    d_max = float(field.max())
    if d_max >= w / 4:
        raise ValueError(f"max disparity {d_max:.1f} exceeds width/4 = {w / 4:.1f}")

    rng = np.random.default_rng(seed)
    if channels == 1:
        right_tex = _texture(rng, (h, w), smooth)
    elif channels == 3:
        right_tex = np.stack([_texture(rng, (h, w), smooth) for _ in range(3)], axis=-1)
    else:
        raise ValueError(f"channels must be 1 or 3, got {channels}")

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    src_x = xs - field
    left_data = sample_bilinear(right_tex, ys, src_x)

    valid = src_x >= 0.0
    valid &= ~_occlusion_mask(kind, field, meta)

    gt = DisparityMap(disparity=field.astype(np.float32), valid=valid)
    descriptor = {"kind": kind, "params": meta, "seed": int(seed), "smooth": smooth, "hw": [h, w]}
    return SyntheticScene(
        left=Image(data=left_data),
        right=Image(data=right_tex),
        gt=gt,
        descriptor=descriptor,
    )


def export_scene(scene: SyntheticScene, out_dir, basename: str = "scene") -> dict:
    """Write left/right (16-bit PNG), ground truth (PFM), calib and metadata.

    Returns the path dict.  ndisp is the smallest integer above the max
    ground-truth disparity, padded by one bin for search headroom.
    """
    os.makedirs(str(out_dir), exist_ok=True)
    paths = {
        "left": os.path.join(str(out_dir), f"{basename}_left.png"),
        "right": os.path.join(str(out_dir), f"{basename}_right.png"),
        "gt": os.path.join(str(out_dir), f"{basename}_gt.pfm"),
        "calib": os.path.join(str(out_dir), f"{basename}_calib.txt"),
        "meta": os.path.join(str(out_dir), f"{basename}_meta.json"),
    }
    save_image(paths["left"], scene.left, bitdepth=16 if scene.left.channels == 1 else 8)
    save_image(paths["right"], scene.right, bitdepth=16 if scene.right.channels == 1 else 8)
    save_disparity(paths["gt"], scene.gt)
    finite = scene.gt.disparity[scene.gt.valid]
    ndisp = int(math.ceil(float(finite.max()))) + 1 if finite.size else 1
    lines = [f"ndisp={ndisp}"]
    params = scene.descriptor.get("params", {})
    if "baseline" in params:
        lines.append(f"baseline={params['baseline']}")
    if "focal" in params:
        lines.append(f"focal={params['focal']}")
    with open(paths["calib"], "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(paths["meta"], "w") as fh:
        json.dump(scene.descriptor, fh, indent=2)
    return paths
