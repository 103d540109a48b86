"""The combined training objective: a convex combination of per-pixel MSE
and an edge-map discrepancy (the "mean square Canny error", MSCE),

    loss = mu * l_mse + (1 - mu) * l_edge

where both terms are batch-and-pixel means of squared differences and the
edge maps come from the operators in edges.py. The target's edge map is a
constant: only the model output receives gradient. Per-pixel normalization
inside each term keeps the meaning of mu independent of patch size.

select_mu implements the per-epoch weighting choice used by dynamic-mu
training: pick the candidate minimizing mu_i * l_mse_i + (1 - mu_i) *
l_edge_i on a fixed validation split, ties going to the largest mu.
"""

from dataclasses import dataclass, field

import numpy as np

from .edges import CannyConfig, SoftEdgeConfig, canny_hard, edge_operator, soft_edge_forward
from .tensors import ShapeMismatchError

# The training range the mu search is restricted to, plus 1.0 which is the
# documented MSE-equivalent configuration.
MU_RANGE = (0.8, 0.99)
DEFAULT_MU = 0.85
DEFAULT_MU_GRID = (0.80, 0.84, 0.85, 0.86, 0.90, 0.95, 0.99)

EDGE_MODES = ("soft", "hard-st", "off")


@dataclass(frozen=True)
class LossConfig:
    mu: float = DEFAULT_MU
    edge_mode: str = "soft"
    soft_cfg: SoftEdgeConfig = field(default_factory=SoftEdgeConfig)
    canny_cfg: CannyConfig = field(default_factory=CannyConfig)
    edge_scale: float = 1.0  # multiplier on edge maps inside l_edge

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must lie in [0, 1], got {self.mu}")
        if self.edge_mode not in EDGE_MODES:
            raise ValueError(f"edge mode must be one of {EDGE_MODES}, got {self.edge_mode!r}")
        if not self.edge_scale > 0:
            raise ValueError(f"edge scale must be > 0, got {self.edge_scale}")


def mu_in_training_range(mu):
    lo, hi = MU_RANGE
    return (lo <= mu <= hi) or mu == 1.0


@dataclass(frozen=True)
class LossBreakdown:
    l_mse: float
    l_edge: float
    combined: float

    def finite(self):
        return np.isfinite(self.l_mse) and np.isfinite(self.l_edge) and np.isfinite(self.combined)


def _check_batch_shapes(output, target, edge_active):
    if output.shape != target.shape:
        raise ShapeMismatchError(output.shape, target.shape)
    if output.ndim != 4 or output.shape[1] != 1:
        raise ValueError(f"expected (B, 1, H, W) tensors, got {output.shape}")
    if edge_active and (output.shape[2] < 3 or output.shape[3] < 3):
        raise ValueError(
            f"edge terms need rasters of at least 3x3, got {output.shape[2]}x{output.shape[3]}"
        )


def _target_edge_map(plane, cfg):
    if cfg.edge_mode == "hard-st":
        return canny_hard(plane, cfg.canny_cfg)
    return soft_edge_forward(plane, cfg.soft_cfg)


def msce_loss(output, target, cfg):
    """Loss breakdown plus the gradient with respect to the model output.

    output, target: (B, 1, H, W). With mu = 1 (or edge mode off) the
    gradient path is exactly the plain MSE one.
    """
    edge_active = cfg.edge_mode != "off"
    _check_batch_shapes(output, target, edge_active)
    count = output.size

    diff = output - target
    l_mse = float(np.mean(np.asarray(diff, dtype=np.float64) ** 2))
    grad = (2.0 * cfg.mu / count) * diff

    l_edge = 0.0
    if edge_active:
        edge_weight = 1.0 - cfg.mu
        s = cfg.edge_scale
        sq_sum = 0.0
        for b in range(output.shape[0]):
            out_map, backward = edge_operator(
                output[b, 0], cfg.edge_mode, soft_cfg=cfg.soft_cfg, canny_cfg=cfg.canny_cfg
            )
            tgt_map = _target_edge_map(target[b, 0], cfg)
            delta = s * (np.asarray(out_map, dtype=np.float64) - np.asarray(tgt_map, dtype=np.float64))
            sq_sum += float(np.sum(delta * delta))
            if edge_weight != 0.0:
                upstream = (edge_weight * 2.0 * s * s / count) * (
                    out_map.astype(output.dtype) - tgt_map.astype(output.dtype)
                )
                grad[b, 0] += backward(upstream)
        l_edge = sq_sum / count

    combined = cfg.mu * l_mse + (1.0 - cfg.mu) * l_edge
    return LossBreakdown(l_mse=l_mse, l_edge=l_edge, combined=combined), grad


def combine(mu, l_mse, l_edge):
    """The selection objective: mu * l_mse + (1 - mu) * l_edge."""
    return mu * l_mse + (1.0 - mu) * l_edge


def select_mu(candidates):
    """Index of the candidate minimizing its own combined loss.

    candidates: list of (mu, LossBreakdown). Ties break toward the largest
    mu, which makes the choice independent of candidate order.
    """
    if not candidates:
        raise ValueError("select_mu needs at least one candidate")
    best = None
    for i, (mu, bd) in enumerate(candidates):
        value = combine(mu, bd.l_mse, bd.l_edge)
        if best is None or value < best[0] or (value == best[0] and mu > best[1]):
            best = (value, mu, i)
    return best[2]
