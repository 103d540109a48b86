"""Command-line interface.

Subcommands: degrade, train, sr, eval, canny. Every command is
deterministic given its flags and --seed (with --threads 1). Exit codes:
0 success, 2 usage/config error, 3 runtime failure.

A plain `key=value` config file can be supplied with --config; entries map
to long flag names (dashes or underscores) and are overridden by flags
given explicitly on the command line.
"""

import argparse
import copy
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import CorpusError, default_patch_size, load_corpus_pairs, scan_corpus
from .edges import CannyConfig, SoftEdgeConfig, canny_hard
from .images import (
    PngError,
    load_png,
    rgb_to_ycbcr,
    save_plane_png,
    save_png,
    ycbcr_to_rgb,
)
from .losses import DEFAULT_MU, DEFAULT_MU_GRID, LossConfig, mu_in_training_range
from .metrics import evaluate_dataset, reconstruct, write_per_image_csv, write_summary_csv
from .nn import (
    CheckpointError,
    DEFAULT_WIDTHS,
    SMALL_WIDTHS,
    build_model,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .optim import AdamState, CONVENTIONAL_BETAS, DEFAULT_BETAS
from .resample import DegradationSpec, bicubic_resize, gaussian_blur
from .train import (
    Replica,
    RunLog,
    TrainingDiverged,
    gather_patches,
    train_dynamic,
    train_fixed,
)


class ConfigError(Exception):
    pass


def parse_blur(text):
    """'none' or 'gaussian:R' -> blur radius (None or float)."""
    if text == "none":
        return None
    if text.startswith("gaussian:"):
        try:
            radius = float(text.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad blur radius in {text!r}")
        if not radius > 0:
            raise ConfigError(f"blur radius must be > 0, got {radius}")
        return radius
    raise ConfigError(f"bad --blur value {text!r} (expected none or gaussian:R)")


def parse_mu_grid(text):
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"bad --mu-grid value {text!r}")
    if not values:
        raise ConfigError("empty --mu-grid")
    if list(values) != sorted(set(values)):
        raise ConfigError(f"--mu-grid must be strictly increasing, got {text!r}")
    return values


def _load_config_argv(path, parser):
    """Turn key=value lines into an argv prefix understood by the parser."""
    known = {a.lstrip("-") for a in parser._option_string_actions}
    argv = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = key.replace("_", "-")
        if flag not in known:
            raise ConfigError(f"{path}:{lineno}: unknown option {key!r}")
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                argv.append(f"--{flag}")
        else:
            argv.extend([f"--{flag}", value])
    return argv


def _add_common(p):
    p.add_argument("--config", help="key=value file; explicit flags override it")
    p.add_argument("--threads", type=int, default=1, help="worker cap (default 1)")


def build_parser():
    parser = argparse.ArgumentParser(prog="edgesr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"edgesr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="synthesize low-resolution PNGs from a directory")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--blur", default="none")
    _add_common(p)

    p = sub.add_parser("train", help="train a model with the MSE or MSCE objective")
    p.add_argument("--model", choices=("srcnn", "espcn"), default="srcnn")
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--loss", choices=("mse", "msce"), default="msce")
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--dynamic-mu", action="store_true")
    p.add_argument("--mu-grid", default=",".join(str(v) for v in DEFAULT_MU_GRID))
    p.add_argument("--edge-mode", choices=("soft", "hard-st"), default="soft")
    p.add_argument("--edge-sigma", type=float, default=SoftEdgeConfig().sigma)
    p.add_argument("--edge-threshold", type=float, default=SoftEdgeConfig().threshold)
    p.add_argument("--edge-sharpness", type=float, default=SoftEdgeConfig().sharpness)
    p.add_argument("--edge-scale", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--patch", type=int, default=None, help="HR patch size (default 32, 33 at scale 3)")
    p.add_argument("--stride", type=int, default=None, help="patch stride (default: patch size)")
    p.add_argument("--blur", default="none")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--adam-conventional", action="store_true",
                   help="use betas (0.9, 0.999) instead of the default (0.999, 0.99)")
    p.add_argument("--unsafe-mu", action="store_true",
                   help="allow mu outside [0.8, 0.99] + {1.0}")
    p.add_argument("--small", action="store_true", help="8/4-filter desk-scale variant")
    p.add_argument("--train-dir", required=True)
    p.add_argument("--val-dir", required=True)
    p.add_argument("--out", dest="out_ckpt", required=True)
    p.add_argument("--log", default=None, help="per-epoch log path (default: <out>.log)")
    _add_common(p)

    p = sub.add_parser("sr", help="super-resolve one PNG with a trained checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="in_img", required=True)
    p.add_argument("--out", dest="out_img", required=True)
    _add_common(p)

    p = sub.add_parser("eval", help="PSNR/SSIM evaluation over a dataset directory")
    p.add_argument("--ckpt", default=None, help="omit for the bicubic baseline")
    p.add_argument("--dataset", required=True)
    p.add_argument("--dataset-name", default=None)
    p.add_argument("--scale", type=int, default=None)
    p.add_argument("--blur", default="none")
    p.add_argument("--method", default=None, help="method label override for the report")
    p.add_argument("--report", required=True, help="summary CSV path")
    p.add_argument("--per-image", default=None,
                   help="per-image CSV path (default: <report>.images.csv)")
    _add_common(p)

    p = sub.add_parser("canny", help="binary Canny edge map of one PNG")
    p.add_argument("--in", dest="in_img", required=True)
    p.add_argument("--out", dest="out_img", required=True)
    p.add_argument("--sigma", type=float, default=CannyConfig().sigma)
    p.add_argument("--low", type=float, default=CannyConfig().low_ratio)
    p.add_argument("--high", type=float, default=CannyConfig().high_ratio)
    _add_common(p)

    return parser


def cmd_degrade(args):
    radius = parse_blur(args.blur)
    try:
        spec = DegradationSpec(scale=args.scale, blur_radius=radius)
    except ValueError as exc:
        raise ConfigError(str(exc))
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out_dir)
    paths = scan_corpus(in_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(path):
        rgb = load_png(path)
        y, cb, cr = rgb_to_ycbcr(rgb)
        h, w = y.shape
        s = spec.scale
        ch, cw = (h // s) * s, (w // s) * s
        if ch < s or cw < s:
            raise ConfigError(f"{path}: image smaller than scale {s}")
        planes = []
        for plane in (y, cb, cr):
            src = plane[:ch, :cw]
            if spec.blur_radius is not None:
                src = gaussian_blur(src, spec.blur_radius)
            planes.append(bicubic_resize(src, cw // s, ch // s))
        save_png(ycbcr_to_rgb(*planes), out_dir / path.name)

    if args.threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            list(pool.map(one, paths))
    else:
        for path in paths:
            one(path)

    with open(out_dir / "manifest.txt", "w", encoding="utf-8") as f:
        f.write(f"scale={spec.scale}\n")
        f.write(f"blur={spec.label()}\n")
        f.write(f"count={len(paths)}\n")
    return 0


def _training_loss_config(args):
    soft_cfg = SoftEdgeConfig(
        sigma=args.edge_sigma,
        threshold=args.edge_threshold,
        sharpness=args.edge_sharpness,
    )
    if args.loss == "mse":
        if args.mu is not None or args.dynamic_mu:
            raise ConfigError("--mu/--dynamic-mu only apply to --loss msce")
        return LossConfig(mu=1.0, edge_mode="off", soft_cfg=soft_cfg,
                          edge_scale=args.edge_scale), None
    if args.dynamic_mu:
        if args.mu is not None:
            raise ConfigError("--mu and --dynamic-mu are mutually exclusive")
        grid = parse_mu_grid(args.mu_grid)
        bad = [m for m in grid if not mu_in_training_range(m)]
        if bad and not args.unsafe_mu:
            raise ConfigError(f"mu grid values {bad} outside [0.8, 0.99] (use --unsafe-mu)")
        cfg = LossConfig(mu=grid[-1], edge_mode=args.edge_mode, soft_cfg=soft_cfg,
                         edge_scale=args.edge_scale)
        return cfg, grid
    mu = DEFAULT_MU if args.mu is None else args.mu
    if not 0.0 <= mu <= 1.0:
        raise ConfigError(f"mu must lie in [0, 1], got {mu}")
    if not mu_in_training_range(mu) and not args.unsafe_mu:
        raise ConfigError(f"mu={mu} outside the training range [0.8, 0.99] (use --unsafe-mu)")
    return LossConfig(mu=mu, edge_mode=args.edge_mode, soft_cfg=soft_cfg,
                      edge_scale=args.edge_scale), None


def cmd_train(args):
    loss_cfg, mu_grid = _training_loss_config(args)
    radius = parse_blur(args.blur)
    try:
        spec = DegradationSpec(scale=args.scale, blur_radius=radius)
    except ValueError as exc:
        raise ConfigError(str(exc))
    patch = args.patch if args.patch is not None else default_patch_size(args.scale)
    stride = args.stride if args.stride is not None else patch
    if patch % args.scale or stride % args.scale:
        raise ConfigError(
            f"patch {patch} and stride {stride} must be divisible by scale {args.scale}"
        )
    if args.epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {args.epochs}")

    widths = SMALL_WIDTHS if args.small else DEFAULT_WIDTHS
    betas = CONVENTIONAL_BETAS if args.adam_conventional else DEFAULT_BETAS

    train_pairs = load_corpus_pairs(args.train_dir, spec)
    val_pairs = load_corpus_pairs(args.val_dir, spec)
    patches = gather_patches(train_pairs, patch, stride)
    if not patches:
        raise ConfigError(f"no {patch}x{patch} patches fit the training images")

    log = RunLog(args.log if args.log is not None else args.out_ckpt + ".log")
    try:
        log.line(
            command="train", arch=args.model, scale=args.scale, loss=args.loss,
            edge_mode=loss_cfg.edge_mode, blur=spec.label(), epochs=args.epochs,
            batch_size=args.batch_size, patch=patch, stride=stride, seed=args.seed,
            lr=args.lr, beta1=betas[0], beta2=betas[1],
            patches=len(patches), train_images=len(train_pairs), val_images=len(val_pairs),
        )
        if mu_grid is None:
            model = build_model(args.model, args.scale, widths=widths)
            init_params(model, args.seed)
            opt = AdamState(model, lr=args.lr, betas=betas)
            train_fixed(model, opt, patches, val_pairs, loss_cfg, args.epochs,
                        args.batch_size, args.seed, log)
        else:
            log.line(mu_grid=",".join(repr(m) for m in mu_grid))
            base = build_model(args.model, args.scale, widths=widths)
            init_params(base, args.seed)
            replicas = []
            for mu in mu_grid:
                m = copy.deepcopy(base)
                replicas.append(Replica(mu=mu, model=m, opt=AdamState(m, lr=args.lr, betas=betas)))
            survivor = train_dynamic(replicas, patches, val_pairs, loss_cfg,
                                     args.epochs, args.batch_size, args.seed, log)
            model = survivor.model
        save_checkpoint(model, args.out_ckpt)
        log.line(checkpoint=args.out_ckpt, params=model.param_count())
    finally:
        log.close()
    return 0


def cmd_sr(args):
    model = load_checkpoint(args.ckpt)
    rgb = load_png(args.in_img)
    y, cb, cr = rgb_to_ycbcr(rgb)
    s = model.scale
    h, w = y.shape
    out_y = reconstruct(model, y.astype(np.float32), (h * s, w * s))
    out_cb = bicubic_resize(cb, w * s, h * s)
    out_cr = bicubic_resize(cr, w * s, h * s)
    save_png(ycbcr_to_rgb(out_y, out_cb, out_cr), args.out_img)
    return 0


def cmd_eval(args):
    model = None
    if args.ckpt is not None:
        model = load_checkpoint(args.ckpt)
    scale = args.scale
    if model is not None:
        if scale is None:
            scale = model.scale
        elif scale != model.scale:
            raise ConfigError(f"--scale {scale} conflicts with checkpoint scale {model.scale}")
    elif scale is None:
        raise ConfigError("--scale is required when no checkpoint is given")
    radius = parse_blur(args.blur)
    try:
        spec = DegradationSpec(scale=scale, blur_radius=radius)
    except ValueError as exc:
        raise ConfigError(str(exc))
    record, rows = evaluate_dataset(
        model, args.dataset, spec,
        dataset_name=args.dataset_name, method=args.method, threads=args.threads,
    )
    write_summary_csv([record], args.report)
    per_image = args.per_image if args.per_image is not None else args.report + ".images.csv"
    write_per_image_csv(rows, per_image)
    return 0


def cmd_canny(args):
    try:
        cfg = CannyConfig(sigma=args.sigma, low_ratio=args.low, high_ratio=args.high)
    except ValueError as exc:
        raise ConfigError(str(exc))
    y, _, _ = rgb_to_ycbcr(load_png(args.in_img))
    edges = canny_hard(y, cfg)
    save_plane_png(edges, args.out_img)
    return 0


_COMMANDS = {
    "degrade": cmd_degrade,
    "train": cmd_train,
    "sr": cmd_sr,
    "eval": cmd_eval,
    "canny": cmd_canny,
}


def _extract_config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()

    # Resolve --config into an argv prefix so explicit flags override it.
    config_path = _extract_config_path(argv)
    if config_path is not None and argv:
        sub = argv[0]
        sub_parser = None
        for action in parser._subparsers._group_actions:
            sub_parser = action.choices.get(sub)
        if sub_parser is None:
            print(f"error: unknown command {sub!r}", file=sys.stderr)
            return 2
        try:
            prefix = _load_config_argv(config_path, sub_parser)
        except (ConfigError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        argv = [sub] + prefix + argv[1:]

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2

    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, CorpusError, CheckpointError, PngError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # runtime failure contract
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def entrypoint():
    sys.exit(main())
