"""PNG loading/saving and color conversion.

Two in-memory image representations are used throughout:

* RGB image: uint8 array of shape (height, width, 3).
* Plane image: float array of shape (height, width) with values in [0, 1].
  One channel, usually luminance. float32 by default.

Color conversion is full-range ITU-R BT.601:
Y = (0.299 R + 0.587 G + 0.114 B) / 255, with Cb/Cr offset to [0, 1].
Quantization back to 8 bits happens only when a plane is saved, with
round-half-up and clamping.
"""

import warnings

import numpy as np
from PIL import Image, UnidentifiedImageError


class PngError(Exception):
    """Base class for PNG decode problems."""


class MalformedPngError(PngError):
    """The file is not a decodable PNG."""


class UnsupportedPngError(PngError):
    """The PNG decodes but is not 8-bit grayscale/RGB."""


_SUPPORTED_MODES = {"L", "LA", "RGB", "RGBA", "P"}


def load_png(path):
    """Load an 8-bit PNG as a uint8 RGB array of shape (H, W, 3).

    Grayscale is promoted to RGB by channel replication. An alpha channel
    is stripped with a warning. 16-bit and 1-bit PNGs are rejected.
    """
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise MalformedPngError(f"{path}: not a PNG file (format={im.format})")
            if im.mode not in _SUPPORTED_MODES:
                raise UnsupportedPngError(f"{path}: unsupported PNG mode {im.mode!r} (8-bit only)")
            if im.mode in ("LA", "RGBA") or (im.mode == "P" and "transparency" in im.info):
                warnings.warn(f"{path}: alpha channel stripped", stacklevel=2)
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except FileNotFoundError:
        raise
    except (PngError,):
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise MalformedPngError(f"{path}: cannot decode PNG ({exc})") from exc
    return arr


def save_png(rgb, path):
    """Save a uint8 (H, W, 3) RGB array as a PNG."""
    rgb = np.asarray(rgb)
    if rgb.dtype != np.uint8 or rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected uint8 (H, W, 3) array, got {rgb.dtype} {rgb.shape}")
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")


def quantize_plane(plane):
    """[0,1] plane -> uint8, round-half-up with clamping."""
    v = np.floor(np.asarray(plane, dtype=np.float64) * 255.0 + 0.5)
    return np.clip(v, 0, 255).astype(np.uint8)


def save_plane_png(plane, path):
    """Save a [0,1] plane as an 8-bit grayscale PNG."""
    Image.fromarray(quantize_plane(plane), mode="L").save(path, format="PNG")


def load_plane_png(path):
    """Load a PNG and return its luminance plane only."""
    y, _, _ = rgb_to_ycbcr(load_png(path))
    return y


def rgb_to_ycbcr(rgb, dtype=np.float32):
    """uint8 RGB -> (y, cb, cr) planes in [0, 1], full-range BT.601."""
    r = np.asarray(rgb[..., 0], dtype=np.float64)
    g = np.asarray(rgb[..., 1], dtype=np.float64)
    b = np.asarray(rgb[..., 2], dtype=np.float64)
    y = (0.299 * r + 0.587 * g + 0.114 * b) / 255.0
    cb = (-0.168736 * r - 0.331264 * g + 0.5 * b) / 255.0 + 0.5
    cr = (0.5 * r - 0.418688 * g - 0.081312 * b) / 255.0 + 0.5
    clip = lambda p: np.clip(p, 0.0, 1.0).astype(dtype)
    return clip(y), clip(cb), clip(cr)


def ycbcr_to_rgb(y, cb, cr):
    """(y, cb, cr) planes in [0, 1] -> uint8 RGB, round-half-up."""
    y = np.asarray(y, dtype=np.float64) * 255.0
    db = (np.asarray(cb, dtype=np.float64) - 0.5) * 255.0
    dr = (np.asarray(cr, dtype=np.float64) - 0.5) * 255.0
    r = y + 1.402 * dr
    g = y - 0.344136 * db - 0.714136 * dr
    b = y + 1.772 * db
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(np.floor(rgb + 0.5), 0, 255).astype(np.uint8)
