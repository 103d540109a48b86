"""Edge detection in two forms: the classic Canny detector and a smooth
surrogate with an analytic backward pass.

The hard detector is the usual pipeline: Gaussian smoothing, 3x3 Sobel
gradients, non-maximum suppression with the gradient direction quantized to
four bins, double thresholding at fractions of the maximum gradient
magnitude, and hysteresis with 8-connectivity. Its output is binary, so it
has no useful gradient.

The soft surrogate replaces NMS + thresholding with a smoothed magnitude
pushed through a sigmoid:

    blur(sigma) -> Sobel gx, gy -> m = sqrt(gx^2 + gy^2 + eps)
                -> 1 / (1 + exp(-k * (m - t)))

which is differentiable everywhere and is what training uses by default.
The straight-through mode pairs the hard forward map with the soft
backward pass.

Both Sobel and the blur use replicated (edge-clamped) borders.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .resample import (
    correlate1d_replicate,
    correlate1d_replicate_adjoint,
    gaussian_blur,
    gaussian_blur_adjoint,
)

_SOBEL_SMOOTH = np.array([1.0, 2.0, 1.0])
_SOBEL_DIFF = np.array([-1.0, 0.0, 1.0])
_TAN_22_5 = np.tan(np.deg2rad(22.5))
_TAN_67_5 = np.tan(np.deg2rad(67.5))


@dataclass(frozen=True)
class CannyConfig:
    sigma: float = 1.4
    low_ratio: float = 0.1
    high_ratio: float = 0.2

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not 0 < self.low_ratio < self.high_ratio <= 1:
            raise ValueError(
                f"need 0 < low_ratio < high_ratio <= 1, got {self.low_ratio}, {self.high_ratio}"
            )


@dataclass(frozen=True)
class SoftEdgeConfig:
    sigma: float = 1.4
    threshold: float = 0.2
    sharpness: float = 20.0
    epsilon: float = 1e-6

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not 0 <= self.threshold <= 1:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        if not self.sharpness > 0:
            raise ValueError(f"sharpness must be > 0, got {self.sharpness}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")


def _require_min_size(img):
    if img.ndim != 2 or img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError(f"edge operators need a 2-D image of at least 3x3, got {img.shape}")


def sobel_gradients(img):
    """3x3 Sobel gx (left-to-right) and gy (top-to-bottom), replicated borders."""
    gx = correlate1d_replicate(img, _SOBEL_SMOOTH, axis=0)
    gx = correlate1d_replicate(gx, _SOBEL_DIFF, axis=1)
    gy = correlate1d_replicate(img, _SOBEL_SMOOTH, axis=1)
    gy = correlate1d_replicate(gy, _SOBEL_DIFF, axis=0)
    return gx, gy


def sobel_gradients_adjoint(ggx, ggy):
    """Accumulate gradients through sobel_gradients back onto the image."""
    gx_part = correlate1d_replicate_adjoint(ggx, _SOBEL_DIFF, axis=1)
    gx_part = correlate1d_replicate_adjoint(gx_part, _SOBEL_SMOOTH, axis=0)
    gy_part = correlate1d_replicate_adjoint(ggy, _SOBEL_DIFF, axis=0)
    gy_part = correlate1d_replicate_adjoint(gy_part, _SOBEL_SMOOTH, axis=1)
    return gx_part + gy_part


def canny_hard(img, cfg=CannyConfig()):
    """Classic binary Canny edge map, values exactly {0, 1}."""
    img = np.asarray(img)
    _require_min_size(img)
    smooth = gaussian_blur(img, cfg.sigma)
    gx, gy = sobel_gradients(smooth)
    mag = np.hypot(gx, gy)

    keep = _nonmax_suppress(gx, gy, mag)

    max_mag = float(mag.max())
    if max_mag == 0.0:
        return np.zeros_like(img)
    strong = keep & (mag > cfg.high_ratio * max_mag)
    weak = keep & (mag > cfg.low_ratio * max_mag)
    edges = _hysteresis(strong, weak)
    return edges.astype(img.dtype)


def _shift(padded, dy, dx, h, w):
    return padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]


def _nonmax_suppress(gx, gy, mag):
    """Keep pixels that are local maxima along the quantized gradient direction.

    Direction is the nearest of 4 bins (0/45/90/135 degrees), ties to the
    lower angle. The comparison is strict against the neighbor on the
    negative side of the axis and >= on the positive side, so exactly one
    of two equal-magnitude neighbors survives.
    """
    h, w = mag.shape
    ax, ay = np.abs(gx), np.abs(gy)
    horizontal = ay <= ax * _TAN_22_5
    vertical = ay > ax * _TAN_67_5
    diagonal = ~horizontal & ~vertical
    diag_main = diagonal & (gx * gy > 0)  # gradient along the down-right diagonal
    diag_anti = diagonal & ~diag_main

    mp = np.pad(mag, 1, mode="constant")
    keep = np.zeros(mag.shape, dtype=bool)
    for mask, (pdy, pdx) in (
        (horizontal, (0, -1)),
        (vertical, (-1, 0)),
        (diag_main, (-1, -1)),
        (diag_anti, (-1, 1)),
    ):
        prev = _shift(mp, pdy, pdx, h, w)
        nxt = _shift(mp, -pdy, -pdx, h, w)
        keep |= mask & (mag > prev) & (mag >= nxt)
    return keep & (mag > 0)


def _hysteresis(strong, weak):
    """Weak pixels survive iff 8-connected (transitively) to a strong pixel."""
    if not strong.any():
        return np.zeros_like(strong)
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    hit = np.unique(labels[strong])
    hit = hit[hit > 0]
    return np.isin(labels, hit)


def _soft_edge_stages(img, cfg):
    smooth = gaussian_blur(img, cfg.sigma)
    gx, gy = sobel_gradients(smooth)
    m = np.sqrt(gx * gx + gy * gy + cfg.epsilon)
    out = 1.0 / (1.0 + np.exp(-cfg.sharpness * (m - cfg.threshold)))
    return out.astype(img.dtype), gx, gy, m


def soft_edge_forward(img, cfg=SoftEdgeConfig()):
    """Smooth edge-strength map, values strictly in (0, 1)."""
    img = np.asarray(img)
    _require_min_size(img)
    out, _, _, _ = _soft_edge_stages(img, cfg)
    return out


def _soft_edge_backprop(upstream, gx, gy, m, out, cfg):
    dm = upstream * out * (1.0 - out) * cfg.sharpness
    ggx = dm * (gx / m)
    ggy = dm * (gy / m)
    return gaussian_blur_adjoint(sobel_gradients_adjoint(ggx, ggy), cfg.sigma)


def soft_edge_backward(img, cfg, upstream):
    """Gradient of sum(upstream * soft_edge_forward(img)) w.r.t. img."""
    img = np.asarray(img)
    upstream = np.asarray(upstream)
    _require_min_size(img)
    if upstream.shape != img.shape:
        raise ValueError(f"upstream shape {upstream.shape} != image shape {img.shape}")
    out, gx, gy, m = _soft_edge_stages(img, cfg)
    return _soft_edge_backprop(upstream, gx, gy, m, out, cfg).astype(img.dtype)


EDGE_MODES = ("soft", "hard-st")


def edge_operator(img, mode, soft_cfg=SoftEdgeConfig(), canny_cfg=CannyConfig()):
    """Edge map plus a single-use backward closure.

    'soft' pairs the smooth forward map with its exact gradient; 'hard-st'
    pairs the binary Canny forward map with the soft backward pass
    (straight-through).
    """
    if mode not in EDGE_MODES:
        raise ValueError(f"unknown edge mode {mode!r}, expected one of {EDGE_MODES}")
    img = np.asarray(img)
    out_soft, gx, gy, m = _soft_edge_stages(img, soft_cfg)
    edge_map = canny_hard(img, canny_cfg) if mode == "hard-st" else out_soft
    used = [False]

    def backward(upstream):
        if used[0]:
            raise RuntimeError("edge backward closure already consumed")
        used[0] = True
        upstream_arr = np.asarray(upstream)
        if upstream_arr.shape != img.shape:
            raise ValueError(f"upstream shape {upstream_arr.shape} != image shape {img.shape}")
        return _soft_edge_backprop(upstream_arr, gx, gy, m, out_soft, soft_cfg).astype(img.dtype)

    return edge_map, backward
