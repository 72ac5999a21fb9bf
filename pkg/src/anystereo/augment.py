"""Stereo-pair augmentations for training-style data and robustness sweeps.

Three asymmetric operations perturb only the target (right) view:
a rigid y-disparity warp (rotation about center plus vertical shift)
that simulates rectification error, an independent chromatic transform,
and a mean-filled rectangular mask that simulates an occluder one
camera cannot see.  A symmetric scale-and-crop treats both views and
the ground truth identically.  sample_spec draws a full specification
from a seed with the gate probabilities and parameter ranges used for
training data.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .interp import resize_bilinear, resize_nearest, sample_bilinear
from .raster_io import DisparityMap, Image

__all__ = [
    "Chromatic",
    "YDisparity",
    "MaskRect",
    "ScaleCrop",
    "AugmentationSpec",
    "TRAINING_RANGES",
    "SWEEP_RANGES",
    "ydisparity_warp",
    "asymmetric_chromatic",
    "asymmetric_mask",
    "symmetric_scale_crop",
    "rotation_displacement",
    "sample_spec",
    "identity_spec",
    "apply_spec",
    "spec_to_dict",
    "spec_from_dict",
]


@dataclass(frozen=True)
class YDisparity:
    rotation: float  # degrees about image center
    ty: float  # pixels, content moves down for positive values


@dataclass(frozen=True)
class Chromatic:
    brightness: float
    gamma: float
    contrast: float


@dataclass(frozen=True)
class MaskRect:
    x: int
    y: int
    w: int
    h: int


@dataclass(frozen=True)
class ScaleCrop:
    scale: float
    crop_x: int
    crop_y: int
    crop_h: int = 576
    crop_w: int = 768


@dataclass(frozen=True)
class AugmentationSpec:
    """One sampled augmentation: which ops run and with what parameters."""

    seed: int
    ydisp: YDisparity | None = None
    chromatic_left: Chromatic | None = None
    chromatic_right: Chromatic | None = None
    mask: MaskRect | None = None
    symmetric: ScaleCrop | None = None


# Parameter ranges.  Training draws stay inside the narrow set; the
# sweep preset stretches the rigid warp to the robustness-grid extremes.
TRAINING_RANGES = {
    "rotation": (0.0, 0.1),
    "ty": (0.0, 2.0),
    "brightness": (0.5, 2.0),
    "gamma": (0.8, 1.2),
    "contrast": (0.8, 1.2),
    "mask_w": (50, 150),
    "mask_h": (50, 150),
}
SWEEP_RANGES = dict(TRAINING_RANGES, rotation=(0.0, 0.4), ty=(0.0, 4.0))


def ydisparity_warp(image: Image, rotation: float, ty: float) -> Image:
    """Rigid 2D warp of one view: rotate about center, then shift down.

    Sampling is bilinear with clamp-to-edge, so pixels pulled from
    outside the frame repeat the border instead of going invalid (a
    miscalibrated camera still returns pixels).  Zero parameters are a
    bitwise no-op, and integer pure translations shift rows exactly
    because bilinear weights collapse to 0/1 at integer coordinates.
    """
    if not (math.isfinite(rotation) and math.isfinite(ty)):
        raise ValueError(f"warp parameters must be finite, got ({rotation}, {ty})")
    if rotation == 0.0 and ty == 0.0:
        return Image(data=image.data.copy(), pfm_scale=image.pfm_scale)
    h, w = image.height, image.width
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    # Invert the forward map p' = R(p - c) + c + (0, ty).
    dy = ys - cy - ty
    dx = xs - cx
    theta = math.radians(rotation)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    src_x = cos_t * dx + sin_t * dy + cx
    src_y = -sin_t * dx + cos_t * dy + cy
    return Image(data=sample_bilinear(image.data, src_y, src_x), pfm_scale=image.pfm_scale)


def rotation_displacement(rotation: float, radius: float) -> float:
    """Pixel displacement a rotation induces at a given radius from center."""
    return 2.0 * abs(math.sin(math.radians(rotation) / 2.0)) * radius


def asymmetric_chromatic(image: Image, brightness: float, gamma: float, contrast: float) -> Image:
    """Per-channel tone change: out = clamp01(((b*in)^g - 0.5) * c + 0.5).

    Brightness scales, gamma bends, contrast stretches about mid-gray,
    in that order.  All three at 1 short-circuit to a bitwise copy.
    """
    if brightness <= 0 or gamma <= 0 or contrast <= 0:
        raise ValueError(
            f"chromatic parameters must be positive, got ({brightness}, {gamma}, {contrast})"
        )
    if brightness == 1.0 and gamma == 1.0 and contrast == 1.0:
        return Image(data=image.data.copy(), pfm_scale=image.pfm_scale)
    x = np.clip(image.data.astype(np.float64), 0.0, None)
    out = (np.power(brightness * x, gamma) - 0.5) * contrast + 0.5
    out = np.clip(out, 0.0, 1.0).astype(np.float32)
    return Image(data=out, pfm_scale=image.pfm_scale)


def _channel_means(data: np.ndarray) -> np.ndarray:
    """Exact per-channel means (fsum is order-independent and correctly rounded)."""
    if data.ndim == 2:
        return np.array([math.fsum(data.ravel(order="K")) / data.size])
    return np.array(
        [math.fsum(data[:, :, c].ravel(order="K")) / (data.shape[0] * data.shape[1])
         for c in range(data.shape[2])]
    )


def asymmetric_mask(image: Image, rect) -> Image:
    """Fill a rectangle of the target view with the whole image's mean color.

    rect is (x, y, w, h); the part outside the frame is clipped away and
    an empty intersection is an error.  The fill value is the mean of
    the ORIGINAL image, so masking a constant image changes nothing.
    """
    x, y, w, h = (int(v) for v in rect)
    if w <= 0 or h <= 0:
        raise ValueError(f"mask rectangle must have positive size, got {rect}")
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, image.width), min(y + h, image.height)
    if x0 >= x1 or y0 >= y1:
        raise ValueError(f"mask rectangle {rect} does not intersect the image")
    means = _channel_means(image.data).astype(np.float32)
    data = image.data.copy()
    if data.ndim == 2:
        data[y0:y1, x0:x1] = means[0]
    else:
        data[y0:y1, x0:x1, :] = means
    return Image(data=data, pfm_scale=image.pfm_scale)


def symmetric_scale_crop(
    left: Image,
    right: Image,
    gt: DisparityMap,
    scale: float,
    crop_origin: tuple[int, int],
    crop_hw: tuple[int, int] = (576, 768),
) -> tuple[Image, Image, DisparityMap]:
    """Rescale the whole triple, then cut the same window from all three.

    Disparity values are multiplied by the realized horizontal factor
    (new width / old width), which can differ from the nominal scale by
    the rounding to integer output size.  The crop must fit inside the
    scaled frame.
    """
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if (left.height, left.width) != (right.height, right.width):
        raise ValueError("left/right dimensions disagree")
    if (gt.height, gt.width) != (left.height, left.width):
        raise ValueError("ground truth dimensions disagree with the images")
    h, w = left.height, left.width
    new_h, new_w = max(1, round(h * scale)), max(1, round(w * scale))
    x_factor = new_w / w

    cy, cx = int(crop_origin[1]), int(crop_origin[0])
    ch, cw = int(crop_hw[0]), int(crop_hw[1])
    if ch < 1 or cw < 1:
        raise ValueError(f"crop size must be positive, got {crop_hw}")
    if cy < 0 or cx < 0 or cy + ch > new_h or cx + cw > new_w:
        raise ValueError(
            f"crop {crop_hw} at ({cx}, {cy}) exceeds the scaled frame {new_h}x{new_w}"
        )

    def resize_image(img: Image) -> np.ndarray:
        if (new_h, new_w) == (h, w):
            return img.data.copy()
        return resize_bilinear(img.data, (new_h, new_w)).astype(np.float32)

    left_s = resize_image(left)[cy : cy + ch, cx : cx + cw]
    right_s = resize_image(right)[cy : cy + ch, cx : cx + cw]

    disp = np.where(gt.valid, gt.disparity, 0.0).astype(np.float64)
    if (new_h, new_w) == (h, w):
        disp_s, valid_s = disp.copy(), gt.valid.copy()
    else:
        disp_s = resize_bilinear(disp, (new_h, new_w))
        valid_s = resize_nearest(gt.valid, (new_h, new_w))
    disp_s = (disp_s * x_factor)[cy : cy + ch, cx : cx + cw]
    valid_s = valid_s[cy : cy + ch, cx : cx + cw]
    gt_s = DisparityMap(disparity=disp_s.astype(np.float32), valid=valid_s)
    return Image(data=left_s), Image(data=right_s), gt_s


def identity_spec(seed: int = 0) -> AugmentationSpec:
    return AugmentationSpec(seed=int(seed))


def sample_spec(seed: int, hw: tuple[int, int] = (512, 640), ranges=None) -> AugmentationSpec:
    """Draw one augmentation spec from a seed.

    The y-disparity warp and the mask each fire with probability 1/2;
    chromatic transforms are always on, drawn independently per view.
    The draw order is fixed (gates, chromatics, then gated parameters)
    so a seed always produces the same spec.
    """
    rng = np.random.default_rng(int(seed))
    r = TRAINING_RANGES if ranges is None else ranges
    h, w = int(hw[0]), int(hw[1])

    ydisp_on = rng.random() < 0.5
    mask_on = rng.random() < 0.5

    def chromatic() -> Chromatic:
        return Chromatic(
            brightness=float(rng.uniform(*r["brightness"])),
            gamma=float(rng.uniform(*r["gamma"])),
            contrast=float(rng.uniform(*r["contrast"])),
        )

    chrom_l = chromatic()
    chrom_r = chromatic()

    ydisp = None
    if ydisp_on:
        ydisp = YDisparity(
            rotation=float(rng.uniform(*r["rotation"])),
            ty=float(rng.uniform(*r["ty"])),
        )
    mask = None
    if mask_on:
        mw = int(rng.integers(r["mask_w"][0], r["mask_w"][1] + 1))
        mh = int(rng.integers(r["mask_h"][0], r["mask_h"][1] + 1))
        mask = MaskRect(
            x=int(rng.integers(0, max(w - mw, 0) + 1)),
            y=int(rng.integers(0, max(h - mh, 0) + 1)),
            w=mw,
            h=mh,
        )
    return AugmentationSpec(
        seed=int(seed),
        ydisp=ydisp,
        chromatic_left=chrom_l,
        chromatic_right=chrom_r,
        mask=mask,
    )


def apply_spec(left: Image, right: Image, spec: AugmentationSpec) -> tuple[Image, Image]:
    """Apply a spec to a pair: reference gets its chromatic, target gets all.

    Target-view order: rigid warp, chromatic, mask.  The mask comes last
    so its fill is the mean of the image it actually covers.  The
    symmetric component needs ground truth and is applied separately
    via symmetric_scale_crop.
    """
    out_l, out_r = left, right
    if spec.chromatic_left is not None:
        c = spec.chromatic_left
        out_l = asymmetric_chromatic(out_l, c.brightness, c.gamma, c.contrast)
    if spec.ydisp is not None:
        out_r = ydisparity_warp(out_r, spec.ydisp.rotation, spec.ydisp.ty)
    if spec.chromatic_right is not None:
        c = spec.chromatic_right
        out_r = asymmetric_chromatic(out_r, c.brightness, c.gamma, c.contrast)
    if spec.mask is not None:
        m = spec.mask
        out_r = asymmetric_mask(out_r, (m.x, m.y, m.w, m.h))
    return out_l, out_r


def spec_to_dict(spec: AugmentationSpec) -> dict:
    return asdict(spec)


def spec_from_dict(d: dict) -> AugmentationSpec:
    def sub(cls, key):
        return cls(**d[key]) if d.get(key) is not None else None

    return AugmentationSpec(
        seed=int(d.get("seed", 0)),
        ydisp=sub(YDisparity, "ydisp"),
        chromatic_left=sub(Chromatic, "chromatic_left"),
        chromatic_right=sub(Chromatic, "chromatic_right"),
        mask=sub(MaskRect, "mask"),
        symmetric=sub(ScaleCrop, "symmetric"),
    )
