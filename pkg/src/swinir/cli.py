"""Batch command-line front end.

Subcommands: degrade, train, infer, eval, gradcheck, inspect. Exit codes:
0 success, 2 usage or validation error, 3 data or integrity error,
4 numeric failure. Unknown flags are errors. Every randomized command
takes --seed; when omitted, a seed is drawn from system entropy and
printed so the run can be reproduced.
"""
from __future__ import annotations

import argparse
import os
import secrets
import sys
from dataclasses import fields as dc_fields
from typing import Dict, Optional

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .degrade import DegradationSpec, degrade_image
from .imageio import (ImageBuffer, ImageFormatError, image_paths, load_image,
                      read_manifest, save_image)
from .metrics import eval_pair
from .model import (SwinIRConfig, init_params, param_count, tiny_config)
from .train import (PairDataset, TrainConfig, gradcheck,
                    make_validation_pairs, restore_image, train)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _fail(message: str, code: int) -> "CliError":
    return CliError(message, code)


# -- config files ----------------------------------------------------------

MODEL_KEYS = {f.name for f in dc_fields(SwinIRConfig)}
TRAIN_KEYS = {f.name for f in dc_fields(TrainConfig)} - {"milestones"}

_BOOL_KEYS = {"rstb_residual"}
_STR_KEYS = {"task", "head_style"}
_FLOAT_KEYS = {"mlp_ratio", "lr", "beta1", "beta2", "eps", "weight_decay",
               "lr_factor"}


def parse_config_file(path: str) -> Dict[str, object]:
    """Flat ``key = value`` lines; # starts a comment."""
    values: Dict[str, object] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise _fail(f"cannot read config {path}: {exc}", EXIT_DATA)
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise _fail(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}",
                        EXIT_USAGE)
        key, _, val = (s.strip() for s in line.partition("="))
        if key not in MODEL_KEYS | TRAIN_KEYS:
            raise _fail(f"{path}:{lineno}: unknown key {key!r}", EXIT_USAGE)
        try:
            if key in _STR_KEYS:
                values[key] = val
            elif key in _BOOL_KEYS:
                if val.lower() not in ("true", "false", "0", "1"):
                    raise ValueError("expected a boolean")
                values[key] = val.lower() in ("true", "1")
            elif key in _FLOAT_KEYS:
                values[key] = float(val)
            else:
                values[key] = int(val)
        except ValueError as exc:
            raise _fail(f"{path}:{lineno}: bad value for {key}: {exc}", EXIT_USAGE)
    return values


def build_configs(values: Dict[str, object]) -> tuple[SwinIRConfig, TrainConfig]:
    model_kwargs = {k: v for k, v in values.items() if k in MODEL_KEYS}
    train_kwargs = {k: v for k, v in values.items() if k in TRAIN_KEYS}
    try:
        return SwinIRConfig(**model_kwargs).validate(), TrainConfig(**train_kwargs)
    except (TypeError, ValueError) as exc:
        raise _fail(f"invalid configuration: {exc}", EXIT_USAGE)


def _config_help() -> str:
    model_defaults = SwinIRConfig()
    train_defaults = TrainConfig()
    lines = ["config file keys (flat 'key = value', # comments):",
             "  model:"]
    for f in dc_fields(SwinIRConfig):
        lines.append(f"    {f.name} (default {getattr(model_defaults, f.name)!r})")
    lines.append("  training:")
    for f in dc_fields(TrainConfig):
        if f.name == "milestones":
            continue
        lines.append(f"    {f.name} (default {getattr(train_defaults, f.name)!r})")
    return "\n".join(lines)


# -- shared helpers ----------------------------------------------------------

def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = secrets.randbits(63)
    print(f"seed {seed}")
    return seed


def _gather_inputs(path: str) -> list[str]:
    if os.path.isdir(path):
        found = image_paths(path)
        if not found:
            raise _fail(f"no PGM/PPM images under {path}", EXIT_DATA)
        return found
    if not os.path.exists(path):
        raise _fail(f"no such file: {path}", EXIT_DATA)
    return [path]


def _load_images(path: str) -> list[ImageBuffer]:
    if os.path.isfile(path) and not path.lower().endswith((".pgm", ".ppm")):
        names = read_manifest(path)
    else:
        names = _gather_inputs(path)
    try:
        return [load_image(p) for p in names]
    except ImageFormatError as exc:
        raise _fail(str(exc), EXIT_DATA)


def _load_ckpt(path: str):
    try:
        return load_checkpoint(path)
    except CheckpointError as exc:
        raise _fail(f"{path}: {exc}", EXIT_DATA)


# -- subcommands ------------------------------------------------------------

def cmd_degrade(args) -> int:
    seed = _resolve_seed(args)
    if args.task == "sr":
        if args.scale is None:
            raise _fail("sr degradation needs --scale", EXIT_USAGE)
        spec = DegradationSpec(kind="bicubic", scale=args.scale, seed=seed)
    elif args.task == "denoise":
        if args.sigma is None:
            raise _fail("denoise degradation needs --sigma", EXIT_USAGE)
        spec = DegradationSpec(kind="gaussian_noise", sigma=args.sigma, seed=seed)
    else:
        if args.quality is None:
            raise _fail("car degradation needs --quality", EXIT_USAGE)
        spec = DegradationSpec(kind="dct_quantize", quality=args.quality, seed=seed)
    print(f"degradation: {spec.describe()}")

    inputs = _gather_inputs(getattr(args, "in"))
    many = len(inputs) > 1 or os.path.isdir(getattr(args, "in"))
    if many:
        os.makedirs(args.out, exist_ok=True)
    for i, path in enumerate(inputs):
        try:
            img = load_image(path)
        except ImageFormatError as exc:
            raise _fail(str(exc), EXIT_DATA)
        from .rng import derive
        per_img = spec if spec.kind != "gaussian_noise" else \
            DegradationSpec(kind=spec.kind, sigma=spec.sigma,
                            seed=derive(seed, i))
        out_img = degrade_image(img, per_img)
        dest = os.path.join(args.out, os.path.basename(path)) if many else args.out
        save_image(out_img, dest)
    return EXIT_OK


def cmd_train(args) -> int:
    values = parse_config_file(args.config)
    if args.seed is not None:
        values["seed"] = args.seed
    elif "seed" not in values:
        values["seed"] = _resolve_seed(args)
    if args.iterations is not None:
        values["iterations"] = args.iterations
    model_cfg, train_cfg = build_configs(values)

    hq = _load_images(args.data)
    if model_cfg.task == "sr":
        spec = DegradationSpec(kind="bicubic", scale=model_cfg.scale)
    elif model_cfg.task == "denoise":
        sigma = float(values.get("sigma", 25.0))
        spec = DegradationSpec(kind="gaussian_noise", sigma=sigma,
                               seed=train_cfg.seed)
    else:
        spec = DegradationSpec(kind="dct_quantize",
                               quality=int(values.get("quality", 40)))

    dataset = PairDataset(hq_images=hq, spec=spec)
    val_pairs = make_validation_pairs(_load_images(args.val), spec) if args.val else []
    result = train(model_cfg, train_cfg, dataset, val_pairs, out_dir=args.out,
                   resume=args.resume, log=print)
    if result.diverged:
        raise _fail("training diverged; last good checkpoint retained", EXIT_NUMERIC)
    return EXIT_OK


def cmd_infer(args) -> int:
    params = _load_ckpt(args.ckpt)
    inputs = _gather_inputs(getattr(args, "in"))
    many = len(inputs) > 1 or os.path.isdir(getattr(args, "in"))
    if many:
        os.makedirs(args.out, exist_ok=True)
    for path in inputs:
        try:
            img = load_image(path)
        except ImageFormatError as exc:
            raise _fail(str(exc), EXIT_DATA)
        if img.channels != params.config.in_channels:
            raise _fail(f"{path}: {img.channels} channels, model expects "
                        f"{params.config.in_channels}", EXIT_DATA)
        restored = restore_image(params, img)
        dest = os.path.join(args.out, os.path.basename(path)) if many else args.out
        save_image(restored, dest)
    return EXIT_OK


def cmd_eval(args) -> int:
    params = _load_ckpt(args.ckpt) if args.ckpt else None
    lq_paths = _gather_inputs(args.lq_dir)
    hq_paths = _gather_inputs(args.hq_dir)
    if len(lq_paths) != len(hq_paths):
        raise _fail(f"{len(lq_paths)} low-quality vs {len(hq_paths)} reference images",
                    EXIT_DATA)
    name_w = max(len(os.path.basename(p)) for p in lq_paths)
    print(f"{'image':<{name_w}}  {'psnr':>9}  {'ssim':>7}")
    psnrs, ssims = [], []
    for lp, hp in zip(lq_paths, hq_paths):
        try:
            lq, hq = load_image(lp), load_image(hp)
        except ImageFormatError as exc:
            raise _fail(str(exc), EXIT_DATA)
        restored = restore_image(params, lq) if params else lq
        p, s = eval_pair(restored, hq, border=args.border)
        psnrs.append(p)
        ssims.append(s)
        print(f"{os.path.basename(lp):<{name_w}}  {p:>9.4f}  {s:>7.4f}")
    print(f"{'mean':<{name_w}}  {float(np.mean(psnrs)):>9.4f}  "
          f"{float(np.mean(ssims)):>7.4f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.config:
        model_cfg, _ = build_configs(parse_config_file(args.config))
    else:
        model_cfg = tiny_config()
    report = gradcheck(model_cfg, tolerance=args.tolerance,
                       seed=args.seed if args.seed is not None else 0)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_inspect(args) -> int:
    params = _load_ckpt(args.ckpt)
    total = 0
    for name, t in params.named():
        dims = "x".join(str(d) for d in t.shape)
        print(f"{name:<40} {dims:>16} {t.size:>10}")
        total += t.size
    cfg = params.config
    print(f"task {cfg.task} scale {cfg.scale} channels {cfg.channels} "
          f"blocks {cfg.rstb_count}x{cfg.stl_per_rstb} window {cfg.window}")
    print(f"total parameters {total}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swinir",
        description="Windowed-transformer image restoration toolbox")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="synthesize a low-quality image",
                       description="Apply a degradation to PGM/PPM images.")
    p.add_argument("--task", required=True, choices=("sr", "denoise", "car"))
    p.add_argument("--scale", type=int, choices=(2, 3, 4))
    p.add_argument("--sigma", type=float)
    p.add_argument("--quality", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--in", required=True, help="input image or directory")
    p.add_argument("--out", required=True, help="output image or directory")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="train a model",
                       description="Train on a directory (or manifest) of HQ images.",
                       epilog=_config_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", required=True, help="flat key = value config file")
    p.add_argument("--data", required=True, help="training images dir or manifest")
    p.add_argument("--val", help="validation images dir or manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--iterations", type=int, help="override config iterations")
    p.add_argument("--resume", help="train_state.json to resume from")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="restore images with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", required=True, help="input image or directory")
    p.add_argument("--out", required=True, help="output image or directory")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="PSNR/SSIM of restored images",
                       description="Without --ckpt, compares inputs directly.")
    p.add_argument("--ckpt", help="checkpoint; omit to score --lq-dir as-is")
    p.add_argument("--lq-dir", required=True)
    p.add_argument("--hq-dir", required=True)
    p.add_argument("--border", type=int, default=0)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--config", help="model config file (default: built-in tiny)")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("inspect", help="list checkpoint parameters")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
