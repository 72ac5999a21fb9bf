"""Core raster types and benchmark file formats.

Stereo benchmarks exchange data in a small set of formats: PFM float
rasters for disparity ground truth, 16-bit PNG disparity encodings
(stored value / 256, zero meaning missing), and plain-text calibration
files with key=value lines.  This module owns the in-memory types
(Image, DisparityMap) and all parsing/serialization.

Conventions:
  * Image data is float32 in [0, 1] after loading from integer formats
    (normalized by the max code value of the source bit depth).
  * DisparityMap stores +Inf at invalid pixels (canonical form); the
    valid mask is authoritative.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as _PILImage


class FormatError(ValueError):
    """A byte stream or text blob does not parse as the expected format."""


@dataclass
class Image:
    """A single- or three-channel float raster.

    data has shape (H, W) for grayscale or (H, W, 3) for color and must
    be finite everywhere.  pfm_scale carries the |scale| header field of
    a source PFM file so a read/write cycle can reproduce it.
    """

    data: np.ndarray
    pfm_scale: float = 1.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim == 3 and self.data.shape[2] == 1:
            self.data = self.data[:, :, 0]
        if self.data.ndim not in (2, 3):
            raise ValueError(f"image data must be 2-D or 3-D, got shape {self.data.shape}")
        if self.data.ndim == 3 and self.data.shape[2] != 3:
            raise ValueError(f"color images must have 3 channels, got {self.data.shape[2]}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError(f"empty image: shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise ValueError("image contains non-finite values")
        if self.pfm_scale <= 0:
            raise ValueError(f"pfm_scale must be positive, got {self.pfm_scale}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]


@dataclass
class DisparityMap:
    """Per-pixel horizontal disparity with a validity mask.

    Valid pixels carry finite, non-negative disparity in full-resolution
    pixel units.  Invalid pixels are normalized to +Inf so that any
    accidental use of an unmasked value is loud rather than silently
    plausible.
    """

    disparity: np.ndarray
    valid: np.ndarray
    pfm_scale: float = 1.0

    def __post_init__(self):
        self.disparity = np.asarray(self.disparity, dtype=np.float32)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.disparity.ndim != 2:
            raise ValueError(f"disparity must be 2-D, got shape {self.disparity.shape}")
        if self.valid.shape != self.disparity.shape:
            raise ValueError(
                f"valid mask shape {self.valid.shape} does not match disparity {self.disparity.shape}"
            )
        if self.disparity.shape[0] < 1 or self.disparity.shape[1] < 1:
            raise ValueError(f"empty disparity map: shape {self.disparity.shape}")
        vals = self.disparity[self.valid]
        if vals.size and not np.isfinite(vals).all():
            raise ValueError("valid pixels contain non-finite disparity")
        if vals.size and (vals < 0).any():
            raise ValueError("valid pixels contain negative disparity")
        if not self.valid.all():
            self.disparity = self.disparity.copy()
            self.disparity[~self.valid] = np.inf
        if self.pfm_scale <= 0:
            raise ValueError(f"pfm_scale must be positive, got {self.pfm_scale}")

    @property
    def height(self) -> int:
        return self.disparity.shape[0]

    @property
    def width(self) -> int:
        return self.disparity.shape[1]


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------

def _next_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    """Return the next whitespace-delimited token and the offset just past it."""
    n = len(buf)
    while pos < n and buf[pos : pos + 1].isspace():
        pos += 1
    if pos >= n:
        raise FormatError(f"unexpected end of header at byte {pos}")
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace():
        pos += 1
    return buf[start:pos], pos


def read_pfm(data: bytes):
    """Parse PFM bytes into a DisparityMap ('Pf') or Image ('PF').

    The header is three whitespace-separated fields after the magic:
    width, height, scale.  A negative scale means little-endian payload,
    positive means big-endian, zero is malformed.  Rows are stored
    bottom-up.  For 'Pf' rasters, +Inf and NaN pixels become invalid.

    Raises FormatError with the byte offset of the first offending field.
    """
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise TypeError("read_pfm expects bytes")
    data = bytes(data)
    magic, pos = _next_token(data, 0)
    if magic not in (b"Pf", b"PF"):
        raise FormatError(f"bad magic {magic!r} at byte 0 (expected 'Pf' or 'PF')")
    channels = 1 if magic == b"Pf" else 3

    tok, tok_end = _next_token(data, pos)
    try:
        width = int(tok)
    except ValueError:
        raise FormatError(f"unparseable width {tok!r} at byte {tok_end - len(tok)}") from None
    tok, tok_end = _next_token(data, tok_end)
    try:
        height = int(tok)
    except ValueError:
        raise FormatError(f"unparseable height {tok!r} at byte {tok_end - len(tok)}") from None
    if width < 1 or height < 1:
        raise FormatError(f"degenerate dimensions {width}x{height}")

    tok, tok_end = _next_token(data, tok_end)
    try:
        scale = float(tok)
    except ValueError:
        raise FormatError(f"unparseable scale {tok!r} at byte {tok_end - len(tok)}") from None
    if scale == 0:
        raise FormatError(f"scale must be nonzero at byte {tok_end - len(tok)}")

    # Exactly one whitespace byte separates the header from the payload.
    payload_start = tok_end + 1
    count = width * height * channels
    need = count * 4
    if len(data) - payload_start < need:
        raise FormatError(
            f"truncated payload: need {need} bytes at byte {payload_start}, "
            f"have {len(data) - payload_start}"
        )
    dtype = "<f4" if scale < 0 else ">f4"
    flat = np.frombuffer(data, dtype=dtype, count=count, offset=payload_start)
    flat = flat.astype(np.float32)  # native byte order copy
    if channels == 1:
        arr = flat.reshape(height, width)
    else:
        arr = flat.reshape(height, width, 3)
    arr = np.flipud(arr).copy()  # stored bottom-up

    if channels == 3:
        if not np.isfinite(arr).all():
            raise FormatError("color PFM contains non-finite pixels")
        return Image(data=arr, pfm_scale=abs(scale))
    valid = np.isfinite(arr)
    if (arr[valid] < 0).any():
        raise FormatError("disparity PFM contains negative values")
    return DisparityMap(disparity=arr, valid=valid, pfm_scale=abs(scale))


def write_pfm(raster, little_endian: bool = True) -> bytes:
    """Serialize a DisparityMap or Image to PFM bytes.

    Writes the canonical header form 'Pf\\n<w> <h>\\n<scale>\\n' so that
    reading and re-writing a canonical file reproduces it byte for byte.
    Invalid disparity pixels are written as +Inf.
    """
    if isinstance(raster, DisparityMap):
        arr = raster.disparity.copy()
        arr[~raster.valid] = np.inf
        magic = b"Pf"
        scale_abs = raster.pfm_scale
    elif isinstance(raster, Image):
        arr = raster.data
        magic = b"Pf" if arr.ndim == 2 else b"PF"
        scale_abs = raster.pfm_scale
    else:
        raise TypeError(f"cannot serialize {type(raster).__name__} as PFM")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("refusing to write an empty raster")
    if np.isnan(arr).any():
        raise ValueError("raster contains NaN; cannot serialize")
    scale = -scale_abs if little_endian else scale_abs
    header = magic + b"\n%d %d\n" % (arr.shape[1], arr.shape[0]) + repr(float(scale)).encode() + b"\n"
    dtype = "<f4" if little_endian else ">f4"
    payload = np.flipud(arr).astype(dtype).tobytes()
    return header + payload


# ---------------------------------------------------------------------------
# 16-bit PNG disparity
# ---------------------------------------------------------------------------

def read_png_disparity(data: bytes) -> DisparityMap:
    """Decode a 16-bit grayscale PNG disparity map (stored / 256, 0 = invalid)."""
    try:
        img = _PILImage.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise FormatError(f"not a decodable image: {exc}") from exc
    if img.format != "PNG":
        raise FormatError(f"expected PNG, got {img.format}")
    if img.mode not in ("I", "I;16"):
        raise FormatError(f"expected 16-bit grayscale PNG, got mode {img.mode!r}")
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise FormatError(f"expected single-channel PNG, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() > 65535:
        raise FormatError("PNG sample values outside the 16-bit range")
    stored = arr.astype(np.uint16)
    valid = stored != 0
    disparity = stored.astype(np.float32) / np.float32(256.0)
    return DisparityMap(disparity=disparity, valid=valid)


def write_png_disparity(dmap: DisparityMap) -> bytes:
    """Encode a DisparityMap as 16-bit PNG (stored = round(d * 256), invalid = 0).

    Disparities that would overflow the 16-bit range raise ValueError.
    A valid disparity below 1/512 rounds to stored value 0 and therefore
    reads back as invalid; callers that care should quantize first.
    """
    d = dmap.disparity
    stored = np.zeros(d.shape, dtype=np.uint16)
    if dmap.valid.any():
        vals = np.rint(d[dmap.valid].astype(np.float64) * 256.0)
        if (vals > 65535).any():
            raise ValueError("disparity too large for 16-bit PNG encoding (max 255.996)")
        stored[dmap.valid] = vals.astype(np.uint16)
    img = _PILImage.fromarray(stored)
    out = io.BytesIO()
    img.save(out, format="PNG")
    return out.getvalue()


# ---------------------------------------------------------------------------
# Calibration files
# ---------------------------------------------------------------------------

_NUM_RE = re.compile(r"[-+]?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?")


def read_calib(text: str) -> dict:
    """Parse a key=value calibration file.

    Returns a dict with keys 'ndisp' (int, required, > 0), 'baseline'
    (float or None) and 'focal' (float or None).  The focal length is
    taken from a 'focal' key if present, otherwise from the first entry
    of a 'cam0' matrix like 'cam0=[f 0 cx; 0 f cy; 0 0 1]'.
    """
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()

    if "ndisp" not in entries:
        raise FormatError("calibration is missing the required 'ndisp' key")
    try:
        ndisp = int(float(entries["ndisp"]))
    except ValueError:
        raise FormatError(f"unparseable ndisp {entries['ndisp']!r}") from None
    if ndisp <= 0:
        raise FormatError(f"ndisp must be positive, got {ndisp}")

    baseline = None
    if "baseline" in entries:
        try:
            baseline = float(entries["baseline"])
        except ValueError:
            raise FormatError(f"unparseable baseline {entries['baseline']!r}") from None

    focal = None
    if "focal" in entries:
        try:
            focal = float(entries["focal"])
        except ValueError:
            raise FormatError(f"unparseable focal {entries['focal']!r}") from None
    elif "cam0" in entries:
        m = _NUM_RE.search(entries["cam0"])
        if m is None:
            raise FormatError(f"cam0 entry has no numeric fields: {entries['cam0']!r}")
        focal = float(m.group(0))

    return {"ndisp": ndisp, "baseline": baseline, "focal": focal}


# ---------------------------------------------------------------------------
# Path-level helpers used by the CLI and service
# ---------------------------------------------------------------------------

def load_image(path) -> Image:
    """Load an image file (.pfm, .png, .jpg) as a normalized float Image."""
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if path.lower().endswith(".pfm"):
        raster = read_pfm(data)
        if isinstance(raster, DisparityMap):
            if not raster.valid.all():
                raise FormatError(f"{path}: grayscale PFM has non-finite pixels; not an image")
            return Image(data=raster.disparity, pfm_scale=raster.pfm_scale)
        return raster
    try:
        img = _PILImage.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise FormatError(f"{path}: not a decodable image: {exc}") from exc
    if img.mode == "L":
        return Image(data=np.asarray(img, dtype=np.float32) / np.float32(255.0))
    if img.mode in ("I", "I;16"):
        arr = np.asarray(img).astype(np.float32)
        return Image(data=arr / np.float32(65535.0))
    if img.mode == "RGB":
        return Image(data=np.asarray(img, dtype=np.float32) / np.float32(255.0))
    raise FormatError(f"{path}: unsupported image mode {img.mode!r} (use L, I;16 or RGB)")


def save_image(path, img: Image, bitdepth: int = 8) -> None:
    """Write an Image to .pfm (float) or .png (8- or 16-bit)."""
    path = str(path)
    if path.lower().endswith(".pfm"):
        with open(path, "wb") as fh:
            fh.write(write_pfm(img))
        return
    if not path.lower().endswith(".png"):
        raise ValueError(f"unsupported image output format: {path}")
    data = np.clip(img.data, 0.0, 1.0)
    if bitdepth == 8:
        arr = np.rint(data.astype(np.float64) * 255.0).astype(np.uint8)
        pil = _PILImage.fromarray(arr)
    elif bitdepth == 16:
        if img.channels != 1:
            raise ValueError("16-bit PNG output supports grayscale only")
        arr = np.rint(data.astype(np.float64) * 65535.0).astype(np.uint16)
        pil = _PILImage.fromarray(arr)
    else:
        raise ValueError(f"bitdepth must be 8 or 16, got {bitdepth}")
    pil.save(path, format="PNG")


def load_disparity(path) -> DisparityMap:
    """Load a disparity map from .pfm or 16-bit .png."""
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if path.lower().endswith(".pfm"):
        raster = read_pfm(data)
        if not isinstance(raster, DisparityMap):
            raise FormatError(f"{path}: color PFM is not a disparity map")
        return raster
    if path.lower().endswith(".png"):
        return read_png_disparity(data)
    raise FormatError(f"unsupported disparity format: {path}")


def save_disparity(path, dmap: DisparityMap) -> None:
    """Write a disparity map to .pfm or 16-bit .png."""
    path = str(path)
    if path.lower().endswith(".pfm"):
        payload = write_pfm(dmap)
    elif path.lower().endswith(".png"):
        payload = write_png_disparity(dmap)
    else:
        raise ValueError(f"unsupported disparity output format: {path}")
    with open(path, "wb") as fh:
        fh.write(payload)
