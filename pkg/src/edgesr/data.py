"""Corpus scanning, patch extraction, and deterministic batching.

The whole pipeline is a pure function of (corpus bytes, degradation spec,
patch geometry, seed): repeated runs produce bit-identical batch tensors.
Low-resolution planes are synthesized on the fly from cached HR luminance,
never read from disk.
"""

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .images import load_png, rgb_to_ycbcr
from .resample import bicubic_resize, synthesize_pair


class CorpusError(Exception):
    pass


@dataclass
class Batch:
    inputs: np.ndarray  # (B, 1, h, w) float32
    targets: np.ndarray  # (B, 1, H, W) float32


def scan_corpus(directory):
    """Lexicographically sorted PNG paths under a directory.

    Non-PNG files are skipped with a warning; an empty result is an error.
    """
    d = Path(directory)
    if not d.is_dir():
        raise CorpusError(f"corpus directory not found: {directory}")
    paths = []
    for p in sorted(d.iterdir(), key=lambda p: p.name):
        if not p.is_file():
            continue
        if p.suffix.lower() == ".png":
            paths.append(p)
        else:
            warnings.warn(f"skipping non-PNG file {p}", stacklevel=2)
    if not paths:
        raise CorpusError(f"no usable PNG images in {directory}")
    return paths


def load_corpus_pairs(directory, spec):
    """Load every PNG's luminance plane and synthesize its training pair."""
    pairs = []
    for path in scan_corpus(directory):
        y, _, _ = rgb_to_ycbcr(load_png(path))
        pairs.append(synthesize_pair(y, spec, source=str(path)))
    return pairs


def extract_patches(pair, hr_patch, stride):
    """Aligned (lr, hr) patch windows over the stride grid.

    The HR window at (sy, sx) pairs with the LR window at
    (sy/scale, sx/scale); both patch size and stride must be divisible by
    the scale so the LR window is a plain crop.
    """
    scale = pair.spec.scale
    if hr_patch % scale != 0:
        raise ValueError(f"patch size {hr_patch} not divisible by scale {scale}")
    if stride % scale != 0:
        raise ValueError(f"stride {stride} not divisible by scale {scale}")
    h, w = pair.hr.shape
    out = []
    for sy in range(0, h - hr_patch + 1, stride):
        for sx in range(0, w - hr_patch + 1, stride):
            hr_win = pair.hr[sy : sy + hr_patch, sx : sx + hr_patch]
            ly, lx = sy // scale, sx // scale
            lp = hr_patch // scale
            lr_win = pair.lr[ly : ly + lp, lx : lx + lp]
            out.append((np.ascontiguousarray(lr_win), np.ascontiguousarray(hr_win)))
    return out


def default_patch_size(scale):
    """Non-overlapping defaults: 32 except for scale 3, which needs 33."""
    return 33 if scale == 3 else 32


def make_batches(patches, batch_size, seed, arch):
    """Seeded shuffle, then fixed-size batches (last one may be short).

    For srcnn the inputs are the LR patches bicubically pre-upscaled to the
    HR patch size; for espcn they stay LR-sized.
    """
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(patches))
    batches = []
    for start in range(0, len(patches), batch_size):
        idx = order[start : start + batch_size]
        lrs, hrs = [], []
        for i in idx:
            lr, hr = patches[i]
            if arch == "srcnn":
                lr = bicubic_resize(lr, hr.shape[1], hr.shape[0])
            lrs.append(lr.astype(np.float32))
            hrs.append(hr.astype(np.float32))
        batches.append(
            Batch(
                inputs=np.stack(lrs)[:, None, :, :],
                targets=np.stack(hrs)[:, None, :, :],
            )
        )
    return batches


def epoch_seed(seed, epoch):
    """Derive the per-epoch shuffle seed from the run seed."""
    return (seed * 1_000_003 + epoch) % (2**63)
