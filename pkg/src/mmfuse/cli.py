"""Command-line surface: train, fuse, eval, ablate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
MMFUSE_THREADS caps torch's thread count; MMFUSE_DEVICE selects the device
used for fusion inference (default cpu).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from . import image_io, metrics, training
from .config import AblationFlags, NetworkConfig, TrainConfig, parse_config_file
from .image_io import ImageSample
from .training import NumericalError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

ABLATION_VARIANTS = [
    ("full", AblationFlags()),
    ("no_stb", AblationFlags(disable_stb=True)),
    ("no_nca", AblationFlags(disable_nca=True)),
    ("no_bfm", AblationFlags(disable_bfm=True)),
]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def fuse_arrays(model, unit_a, unit_b, device="cpu"):
    """Fuse two [0, 1] grayscale arrays; returns the fused [0, 1] array."""
    if unit_a.shape != unit_b.shape:
        raise ValueError(f"input dimensions differ: {unit_a.shape} vs {unit_b.shape}")
    pair = np.stack([unit_a, unit_b])[:, None].astype(np.float32) * 2.0 - 1.0
    t = torch.from_numpy(pair).to(device)
    model = model.to(device)
    with torch.no_grad():
        fused = model(t[0:1], t[1:2])
    return ((fused[0, 0].cpu().numpy() + 1.0) / 2.0).clip(0.0, 1.0)


def fuse_luminance(model, gray_sample, color_sample, device="cpu"):
    """Fuse a gray image with the luma of a color image.

    Returns (fused_y, cb, cr) as [0, 1] float planes; cb and cr are the
    color source's chroma planes, untouched.
    """
    y, cb, cr = image_io.rgb_to_ycbcr(
        image_io.to_unit(color_sample.pixels, color_sample.bit_depth)
    )
    gray = image_io.to_unit(gray_sample.pixels, gray_sample.bit_depth)
    return fuse_arrays(model, gray, y, device), cb, cr


def fuse_samples(model, a: ImageSample, b: ImageSample, policy="luminance-fuse", device="cpu"):
    """Fuse two loaded images according to the color policy."""
    if a.pixels.shape[:2] != b.pixels.shape[:2]:
        raise ValueError(
            f"input dimensions differ: {a.pixels.shape[:2]} vs {b.pixels.shape[:2]}"
        )
    if policy not in ("luminance-fuse", "gray-only"):
        raise UsageError(f"unknown color policy {policy!r}")
    colored = [s for s in (a, b) if s.color_space != "gray"]
    if policy == "luminance-fuse" and len(colored) == 1:
        color = colored[0]
        gray = a if color is b else b
        fy, cb, cr = fuse_luminance(model, gray, color, device)
        rgb = image_io.ycbcr_to_rgb(fy, cb, cr)
        return ImageSample(
            image_io.from_unit(rgb, color.bit_depth), color.bit_depth, "rgb", "fused"
        )
    if policy == "luminance-fuse" and len(colored) == 2:
        raise ValueError(
            "two color inputs are ambiguous under luminance-fuse; use --color-policy gray-only"
        )
    ga, gb = image_io.to_gray(a), image_io.to_gray(b)
    fused = fuse_arrays(
        model,
        image_io.to_unit(ga.pixels, ga.bit_depth),
        image_io.to_unit(gb.pixels, gb.bit_depth),
        device,
    )
    return ImageSample(image_io.from_unit(fused, a.bit_depth), a.bit_depth, "gray", "fused")


def _load_configs(args):
    if getattr(args, "config", None):
        net_cfg, train_cfg = parse_config_file(args.config)
    else:
        net_cfg, train_cfg = NetworkConfig(), TrainConfig()
    if getattr(args, "seed", None) is not None:
        train_cfg = replace(train_cfg, seed=args.seed)
    return net_cfg, train_cfg


def cmd_train(args) -> int:
    net_cfg, train_cfg = _load_configs(args)
    out = Path(args.out)
    log_path = args.log or out.with_suffix(".loss.csv")
    training.fit(args.corpus, net_cfg, train_cfg, checkpoint_path=out, log_path=log_path)
    print(f"checkpoint written to {out}")
    return EXIT_OK


def cmd_fuse(args) -> int:
    ckpt = training.load_checkpoint(args.checkpoint)
    if args.seed is not None:
        training.seed_all(args.seed)
    model = ckpt.build_model()
    a = image_io.load_image(args.path_a)
    b = image_io.load_image(args.path_b)
    fused = fuse_samples(model, a, b, policy=args.color_policy, device=args.device)
    image_io.save_image(fused, args.out)
    print(f"fused image written to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    report = metrics.evaluate_dir(args.dir_a, args.dir_b, args.dir_fused)
    out = Path(args.out)
    metrics.write_report(report, text_path=out, json_path=out.with_suffix(".json"))
    print(report.to_text(), end="")
    if report.missing:
        print(f"error: {len(report.missing)} file(s) lacked counterparts", file=sys.stderr)
        return EXIT_DATA
    if not report.pairs:
        print("error: no evaluable pairs found", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _ablate_table(rows, seed):
    lines = [
        f"# ablation comparison, seed={seed} for every variant",
        f"{'variant':<10}{'psnr':>12}{'fmi':>12}{'qcv':>14}",
    ]
    for name, avg in rows:
        if avg is None:
            lines.append(f"{name:<10}{'FAILED':>12}{'-':>12}{'-':>14}")
        else:
            lines.append(
                f"{name:<10}{avg['psnr']:>12.4f}{avg['fmi']:>12.4f}{avg['qcv']:>14.4f}"
            )
    return "\n".join(lines) + "\n"


def cmd_ablate(args) -> int:
    net_cfg, train_cfg = _load_configs(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    eval_a, eval_b = Path(args.eval_a), Path(args.eval_b)
    names = sorted(
        p.name
        for p in eval_a.iterdir()
        if p.suffix.lower() in image_io.SUPPORTED_SUFFIXES and (eval_b / p.name).exists()
    )
    if not names:
        raise ValueError(f"no matching evaluation pairs between {eval_a} and {eval_b}")

    rows, failure = [], None
    for name, flags in ABLATION_VARIANTS:
        var_cfg = replace(train_cfg, ablation=flags)
        fused_dir = out_dir / name
        fused_dir.mkdir(exist_ok=True)
        try:
            ckpt = training.fit(
                args.corpus,
                net_cfg,
                var_cfg,
                checkpoint_path=out_dir / f"{name}.pt",
                log_path=out_dir / f"{name}.loss.csv",
            )
            model = ckpt.build_model()
            for fname in names:
                fused = fuse_samples(
                    model,
                    image_io.load_image(eval_a / fname),
                    image_io.load_image(eval_b / fname),
                    policy="gray-only",
                    device=args.device,
                )
                image_io.save_image(fused, fused_dir / fname)
            report = metrics.evaluate_dir(eval_a, eval_b, fused_dir)
            rows.append((name, report.averages))
        except Exception as exc:
            failure = (name, exc)
            rows.append((name, None))
            break

    table = _ablate_table(rows, train_cfg.seed)
    if failure is not None:
        table += f"# aborted: variant {failure[0]} failed: {failure[1]}\n"
    (out_dir / "ablation.txt").write_text(table)
    print(table, end="")
    if failure is not None:
        print(f"error: variant {failure[0]} failed", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(failure[1], NumericalError) else EXIT_DATA
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="mmfuse", description="multimodal image fusion tool")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train on a directory of images")
    p_train.add_argument("corpus", help="directory of training images")
    p_train.add_argument("--config", help="flat key=value config file")
    p_train.add_argument("--out", default="checkpoint.pt", help="checkpoint output path")
    p_train.add_argument("--log", help="loss log path (default: alongside checkpoint)")
    p_train.add_argument("--seed", type=int, help="override the config seed")
    p_train.set_defaults(func=cmd_train)

    p_fuse = sub.add_parser("fuse", help="fuse two aligned images")
    p_fuse.add_argument("path_a")
    p_fuse.add_argument("path_b")
    p_fuse.add_argument("--checkpoint", required=True)
    p_fuse.add_argument("--out", required=True)
    p_fuse.add_argument(
        "--color-policy",
        choices=["luminance-fuse", "gray-only"],
        default="luminance-fuse",
        dest="color_policy",
    )
    p_fuse.add_argument("--seed", type=int)
    p_fuse.set_defaults(func=cmd_fuse)

    p_eval = sub.add_parser("eval", help="metric report over matching directories")
    p_eval.add_argument("dir_a")
    p_eval.add_argument("dir_b")
    p_eval.add_argument("dir_fused")
    p_eval.add_argument("--out", default="report.txt")
    p_eval.add_argument("--seed", type=int)
    p_eval.set_defaults(func=cmd_eval)

    p_ablate = sub.add_parser("ablate", help="train all ablation variants and compare")
    p_ablate.add_argument("corpus")
    p_ablate.add_argument("--eval-a", required=True, dest="eval_a")
    p_ablate.add_argument("--eval-b", required=True, dest="eval_b")
    p_ablate.add_argument("--config")
    p_ablate.add_argument("--out", default="ablation", help="output directory")
    p_ablate.add_argument("--seed", type=int)
    p_ablate.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    threads = os.environ.get("MMFUSE_THREADS")
    if threads:
        torch.set_num_threads(int(threads))
    args.device = os.environ.get("MMFUSE_DEVICE", "cpu")
    if getattr(args, "seed", None) is not None:
        training.seed_all(args.seed)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
