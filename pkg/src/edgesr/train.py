"""Training loops: fixed-weight runs and the per-epoch dynamic-mu protocol.

Dynamic mode keeps one model replica per candidate mu. Every epoch each
replica trains on the same shuffled batches with its own mu; the replica
whose validation objective mu*l_mse + (1-mu)*l_edge is smallest survives,
and its parameters (and optimizer moments) are cloned into the others for
the next epoch. A replica that produces a non-finite loss is disqualified;
if every replica diverges the run aborts.

The per-epoch log is line-oriented `key=value` text with a stable field
order so harnesses can parse it.
"""

import copy
import sys
from dataclasses import dataclass, replace

import numpy as np

from .data import epoch_seed, extract_patches, make_batches
from .losses import LossBreakdown, LossConfig, combine, msce_loss, select_mu
from .metrics import psnr
from .nn import model_backward, model_forward
from .optim import adam_step
from .resample import bicubic_resize


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Replica:
    mu: float
    model: object
    opt: object
    alive: bool = True


class RunLog:
    """Writes one `key=value ...` line per event to a file and optionally
    mirrors it to stdout."""

    def __init__(self, path=None, echo=False):
        self.f = open(path, "w", encoding="utf-8") if path else None
        self.echo = echo

    def line(self, **fields):
        text = " ".join(f"{k}={_fmt(v)}" for k, v in fields.items())
        if self.f:
            self.f.write(text + "\n")
            self.f.flush()
        if self.echo:
            print(text, file=sys.stderr)

    def close(self):
        if self.f:
            self.f.close()
            self.f = None


def _fmt(v):
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def gather_patches(pairs, hr_patch, stride):
    patches = []
    for pair in pairs:
        patches.extend(extract_patches(pair, hr_patch, stride))
    return patches


def train_one_epoch(model, opt, batches, loss_cfg):
    """Returns the mean training breakdown; raises TrainingDiverged on a
    non-finite loss."""
    sums = np.zeros(3)
    for batch in batches:
        out, tape = model_forward(model, batch.inputs)
        breakdown, out_grad = msce_loss(out, batch.targets, loss_cfg)
        if not breakdown.finite():
            raise TrainingDiverged(
                f"non-finite loss (mse={breakdown.l_mse}, edge={breakdown.l_edge})"
            )
        grads, _ = model_backward(model, tape, out_grad)
        adam_step(opt, model, grads)
        sums += (breakdown.l_mse, breakdown.l_edge, breakdown.combined)
    n = max(1, len(batches))
    return LossBreakdown(
        l_mse=float(sums[0] / n), l_edge=float(sums[1] / n), combined=float(sums[2] / n)
    )


def validate(model, val_pairs, loss_cfg):
    """Mean validation breakdown and PSNR over full validation images.

    The edge term is always evaluated (soft mode when the training loss
    had none) so runs with different objectives stay comparable.
    """
    eval_cfg = loss_cfg if loss_cfg.edge_mode != "off" else replace(loss_cfg, edge_mode="soft")
    mses, edges, psnrs = [], [], []
    for pair in val_pairs:
        if model.arch == "srcnn":
            x = bicubic_resize(pair.lr, pair.hr.shape[1], pair.hr.shape[0]).astype(np.float32)
        else:
            x = pair.lr.astype(np.float32)
        out, _ = model_forward(model, x[None, None, :, :])
        target = pair.hr.astype(np.float32)[None, None, :, :]
        breakdown, _ = msce_loss(out, target, replace(eval_cfg, mu=1.0))
        mses.append(breakdown.l_mse)
        edges.append(breakdown.l_edge)
        psnrs.append(psnr(np.clip(out[0, 0], 0.0, 1.0), pair.hr, shave=model.scale))
    l_mse = sum(mses) / len(mses)
    l_edge = sum(edges) / len(edges)
    return LossBreakdown(
        l_mse=l_mse, l_edge=l_edge, combined=combine(loss_cfg.mu, l_mse, l_edge)
    ), sum(psnrs) / len(psnrs)


def train_fixed(model, opt, patches, val_pairs, loss_cfg, epochs, batch_size, seed, log):
    for epoch in range(1, epochs + 1):
        batches = make_batches(patches, batch_size, epoch_seed(seed, epoch), model.arch)
        train_bd = train_one_epoch(model, opt, batches, loss_cfg)
        val_bd, val_psnr = validate(model, val_pairs, loss_cfg)
        log.line(
            epoch=epoch,
            mu=loss_cfg.mu,
            train_mse=train_bd.l_mse,
            train_edge=train_bd.l_edge,
            train_loss=train_bd.combined,
            val_mse=val_bd.l_mse,
            val_edge=val_bd.l_edge,
            val_loss=val_bd.combined,
            val_psnr=val_psnr,
        )
    return model


def dynamic_mu_epoch(replicas, batches, val_pairs, base_cfg, epoch, log):
    """One epoch of the dynamic protocol. Returns the surviving replica."""
    candidates = []
    for rep in replicas:
        if not rep.alive:
            continue
        cfg = replace(base_cfg, mu=rep.mu)
        try:
            train_one_epoch(rep.model, rep.opt, batches, cfg)
        except TrainingDiverged:
            rep.alive = False
            log.line(epoch=epoch, candidate_mu=rep.mu, disqualified=1)
            continue
        val_bd, val_psnr = validate(rep.model, val_pairs, cfg)
        if not val_bd.finite():
            rep.alive = False
            log.line(epoch=epoch, candidate_mu=rep.mu, disqualified=1)
            continue
        candidates.append((rep, val_bd, val_psnr))
        log.line(
            epoch=epoch,
            candidate_mu=rep.mu,
            val_mse=val_bd.l_mse,
            val_edge=val_bd.l_edge,
            val_combined=combine(rep.mu, val_bd.l_mse, val_bd.l_edge),
        )
    if not candidates:
        raise TrainingDiverged(
            f"epoch {epoch}: every mu candidate diverged "
            f"(grid: {[r.mu for r in replicas]})"
        )
    idx = select_mu([(rep.mu, bd) for rep, bd, _ in candidates])
    survivor, bd, val_psnr = candidates[idx]
    log.line(epoch=epoch, chosen_mu=survivor.mu, val_psnr=val_psnr)
    for rep in replicas:
        if rep is survivor or not rep.alive:
            continue
        rep.model = copy.deepcopy(survivor.model)
        rep.opt = survivor.opt.clone()
    return survivor


def train_dynamic(replicas, patches, val_pairs, base_cfg, epochs, batch_size, seed, log):
    survivor = None
    for epoch in range(1, epochs + 1):
        arch = replicas[0].model.arch
        batches = make_batches(patches, batch_size, epoch_seed(seed, epoch), arch)
        survivor = dynamic_mu_epoch(replicas, batches, val_pairs, base_cfg, epoch, log)
    return survivor
