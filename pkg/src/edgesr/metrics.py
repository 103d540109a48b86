"""PSNR and SSIM on [0,1] luminance planes, plus dataset evaluation.

Both metrics shave a border (by convention, the scale factor in pixels)
before comparing, so padding artifacts at image borders never dominate.
PSNR uses dynamic range 1.0 and returns +inf for identical inputs,
serialized as the string "inf" in CSV reports. SSIM is the standard
windowed form: 11x11 Gaussian window, sigma 1.5, K1 = 0.01, K2 = 0.03,
averaged over all fully-interior windows.
"""

import math
from dataclasses import dataclass

import numpy as np

from .data import scan_corpus
from .images import load_png, rgb_to_ycbcr
from .nn import model_forward
from .resample import bicubic_resize, synthesize_pair
from .tensors import ShapeMismatchError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class EvalRecord:
    dataset: str
    scale: int
    method: str
    psnr: float
    ssim: float
    count: int


def _shaved(a, b, shave):
    if a.shape != b.shape:
        raise ShapeMismatchError(a.shape, b.shape)
    h, w = a.shape
    if shave < 0 or 2 * shave >= min(h, w):
        raise ValueError(f"shave {shave} too large for {w}x{h} image")
    if shave:
        a = a[shave:-shave, shave:-shave]
        b = b[shave:-shave, shave:-shave]
    return np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)


def psnr(a, b, shave=0):
    """10*log10(1 / mean squared error) in dB; +inf when the images match."""
    a, b = _shaved(a, b, shave)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _ssim_window():
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
    return k / k.sum()


def _window_means(img, k):
    """Valid-mode separable correlation: only fully-interior windows."""
    tmp = np.lib.stride_tricks.sliding_window_view(img, len(k), axis=0) @ k
    return np.lib.stride_tricks.sliding_window_view(tmp, len(k), axis=1) @ k


def ssim(a, b, shave=0):
    """Mean local structural similarity over the shaved region."""
    a, b = _shaved(a, b, shave)
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"image {a.shape} smaller than the {SSIM_WINDOW}-tap SSIM window")
    k = _ssim_window()
    mu_a = _window_means(a, k)
    mu_b = _window_means(b, k)
    e_aa = _window_means(a * a, k)
    e_bb = _window_means(b * b, k)
    e_ab = _window_means(a * b, k)
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    ssim_map = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    )
    return float(np.mean(ssim_map))


def reconstruct(model, lr, hr_shape):
    """Model output for one LR plane, clamped to [0,1]. model=None is the
    plain bicubic baseline."""
    hr_h, hr_w = hr_shape
    if model is None:
        return bicubic_resize(lr, hr_w, hr_h)
    if model.arch == "srcnn":
        x = bicubic_resize(lr, hr_w, hr_h).astype(np.float32)
    else:
        x = lr.astype(np.float32)
    out, _ = model_forward(model, x[None, None, :, :])
    return np.clip(out[0, 0], 0.0, 1.0)


def evaluate_dataset(model, dataset_dir, spec, dataset_name=None, method=None, threads=1):
    """Per-image PSNR/SSIM over a directory of HR PNGs, plus the means.

    Returns (EvalRecord, per-image rows), where each row is
    (path, scale, psnr, ssim). The model may be None for the bicubic
    baseline; otherwise its scale must match the degradation spec.
    """
    if model is not None and model.scale != spec.scale:
        raise ValueError(f"model scale {model.scale} != degradation scale {spec.scale}")
    if dataset_name is None:
        dataset_name = str(dataset_dir).rstrip("/").rsplit("/", 1)[-1]
    if method is None:
        method = "bicubic" if model is None else model.arch

    paths = scan_corpus(dataset_dir)

    def one(path):
        y, _, _ = rgb_to_ycbcr(load_png(path))
        pair = synthesize_pair(y, spec, source=str(path))
        out = reconstruct(model, pair.lr, pair.hr.shape)
        return (
            str(path),
            spec.scale,
            psnr(out, pair.hr, shave=spec.scale),
            ssim(out, pair.hr, shave=spec.scale),
        )

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, paths))
    else:
        rows = [one(p) for p in paths]

    mean_psnr = sum(r[2] for r in rows) / len(rows)
    mean_ssim = sum(r[3] for r in rows) / len(rows)
    record = EvalRecord(
        dataset=dataset_name,
        scale=spec.scale,
        method=method,
        psnr=mean_psnr,
        ssim=mean_ssim,
        count=len(rows),
    )
    return record, rows


def format_value(v):
    """Full-precision float formatting; infinities become 'inf'."""
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(float(v))
    return str(v)


def write_per_image_csv(rows, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("path,scale,psnr,ssim\n")
        for r in rows:
            f.write(",".join(format_value(v) for v in r) + "\n")


def write_summary_csv(records, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("dataset,scale,method,psnr,ssim\n")
        for rec in records:
            f.write(
                ",".join(
                    format_value(v)
                    for v in (rec.dataset, rec.scale, rec.method, rec.psnr, rec.ssim)
                )
                + "\n"
            )
