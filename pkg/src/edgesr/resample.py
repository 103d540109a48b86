"""Bicubic resizing, Gaussian blur, and low-resolution pair synthesis.

Conventions, fixed so results are reproducible bit-for-bit within this repo:

* Bicubic uses the Keys cubic kernel with a = -0.5 (Catmull-Rom),
  center-aligned coordinate mapping src = (dst + 0.5) * (in / out) - 0.5,
  and edge-clamped source sampling. Output is clamped to [0, 1].
* "Blur radius r" means a Gaussian with sigma = r, kernel half-width
  ceil(3 sigma), normalized to sum 1, applied separably with replicated
  (edge-clamped) borders.
* Degradation crops the HR image top-left to the largest multiple of the
  scale, optionally blurs, then downsamples bicubically.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

VALID_SCALES = (2, 3, 4, 8)


@dataclass(frozen=True)
class DegradationSpec:
    """How a low-resolution input is synthesized from an HR image."""

    scale: int
    blur_radius: float | None = None  # None = plain bicubic pipeline

    def __post_init__(self):
        if self.scale not in VALID_SCALES:
            raise ValueError(f"scale must be one of {VALID_SCALES}, got {self.scale}")
        if self.blur_radius is not None and not self.blur_radius > 0:
            raise ValueError(f"blur radius must be > 0, got {self.blur_radius}")

    def label(self):
        if self.blur_radius is None:
            return "none"
        return f"gaussian:{self.blur_radius:g}"


@dataclass
class TrainingPair:
    """A matched low-resolution input and high-resolution target."""

    lr: np.ndarray
    hr: np.ndarray
    source: str = ""
    spec: DegradationSpec | None = None


def _cubic_weights(frac, a=-0.5):
    """Keys kernel weights for the 4 taps around a sample at offset frac."""
    x = np.asarray(frac, dtype=np.float64)
    d = np.stack([x + 1.0, x, 1.0 - x, 2.0 - x])  # distances of taps -1..+2
    ad = np.abs(d)
    w = np.where(
        ad <= 1.0,
        (a + 2.0) * ad**3 - (a + 3.0) * ad**2 + 1.0,
        a * ad**3 - 5.0 * a * ad**2 + 8.0 * a * ad - 4.0 * a,
    )
    return w  # shape (4, n)


def _resize_axis(img, out_n, axis):
    in_n = img.shape[axis]
    dst = np.arange(out_n, dtype=np.float64)
    src = (dst + 0.5) * (in_n / out_n) - 0.5
    base = np.floor(src).astype(np.int64)
    frac = src - base
    weights = _cubic_weights(frac)  # (4, out_n)
    taps = np.clip(base[None, :] + np.arange(-1, 3)[:, None], 0, in_n - 1)  # (4, out_n)
    moved = np.moveaxis(img, axis, 0).astype(np.float64)
    gathered = moved[taps]  # (4, out_n, ...)
    out = np.einsum("to,to...->o...", weights, gathered)
    return np.moveaxis(out, 0, axis)


def bicubic_resize(img, out_w, out_h):
    """Resize a [0,1] plane to (out_h, out_w) with Catmull-Rom bicubic."""
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be >= 1, got {out_w}x{out_h}")
    img = np.asarray(img)
    out = _resize_axis(img, out_h, 0)
    out = _resize_axis(out, out_w, 1)
    return np.clip(out, 0.0, 1.0).astype(img.dtype)


def gaussian_kernel1d(sigma):
    """Normalized 1-D Gaussian taps at offsets -ceil(3 sigma)..ceil(3 sigma)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    half = int(np.ceil(3.0 * sigma))
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def correlate1d_replicate(x, weights, axis):
    """1-D correlation along axis with edge-clamped borders, dtype-preserving."""
    return ndimage.correlate1d(x, weights, axis=axis, mode="nearest")


def correlate1d_replicate_adjoint(g, weights, axis):
    """Adjoint of correlate1d_replicate: scatters border gradients back
    onto the clamped edge samples."""
    w = np.asarray(weights, dtype=np.float64)
    half = len(w) // 2
    n = g.shape[axis]
    pad = [(0, 0)] * g.ndim
    pad[axis] = (half, half)
    gp = np.pad(g, pad, mode="constant")
    # Full correlation h[m] = sum_i g[i] * w[m - i], m = 0 .. n + 2*half - 1.
    h = ndimage.correlate1d(gp, w[::-1], axis=axis, mode="constant", cval=0.0)
    core = [slice(None)] * g.ndim
    core[axis] = slice(half, half + n)
    out = h[tuple(core)].copy()

    def edge_sum(sl):
        idx = [slice(None)] * g.ndim
        idx[axis] = sl
        return h[tuple(idx)].sum(axis=axis)

    first = [slice(None)] * g.ndim
    first[axis] = 0
    last = [slice(None)] * g.ndim
    last[axis] = n - 1
    out[tuple(first)] += edge_sum(slice(0, half))
    out[tuple(last)] += edge_sum(slice(half + n, None))
    return out.astype(g.dtype)


def gaussian_blur(img, radius):
    """Separable Gaussian blur with sigma = radius and replicated borders."""
    img = np.asarray(img)
    k = gaussian_kernel1d(radius)
    out = correlate1d_replicate(img, k, axis=-2)
    out = correlate1d_replicate(out, k, axis=-1)
    return out


def gaussian_blur_adjoint(g, radius):
    """Gradient of gaussian_blur with respect to its input."""
    k = gaussian_kernel1d(radius)
    out = correlate1d_replicate_adjoint(g, k, axis=-1)
    out = correlate1d_replicate_adjoint(out, k, axis=-2)
    return out


def synthesize_pair(hr, spec, source=""):
    """Build a training pair from an HR plane per a degradation spec.

    The HR plane is cropped top-left to the largest multiple of the scale;
    the LR side is the (optionally blurred) crop downsampled bicubically.
    """
    hr = np.asarray(hr)
    h, w = hr.shape
    s = spec.scale
    if h < s or w < s:
        raise ValueError(f"image {w}x{h} smaller than scale {s}")
    ch, cw = (h // s) * s, (w // s) * s
    hr_crop = np.ascontiguousarray(hr[:ch, :cw])
    src = hr_crop if spec.blur_radius is None else gaussian_blur(hr_crop, spec.blur_radius)
    lr = bicubic_resize(src, cw // s, ch // s)
    return TrainingPair(lr=lr, hr=hr_crop, source=source, spec=spec)
