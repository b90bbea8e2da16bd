"""Command-line interface.

Subcommands: deblur a single image, synthesize blurred pairs, evaluate a
manifest of pairs, sweep one config axis, and dump a noise schedule.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .engine import (
    KERNEL_REGULARIZERS,
    SDIConfig,
    config_from_text,
    run,
)
from .errors import NonFiniteLossError, ValidationError
from .fileio import load_image, load_kernel, save_kernel
from .forward_model import BOUNDARY_MODES
from .harness import (
    SWEEP_AXES,
    SweepSpec,
    benchmark_instance,
    build_pairs,
    evaluate_manifest,
    make_instance,
    save_instance,
    sweep,
)
from .kernel_gen import MODES
from .schedule import build_schedule, schedule_rows
from .synthetic import benchmark_image, two_segment_motion_kernel

log = logging.getLogger("deblursdi")

_CONFIG_FLAGS = {
    "T": dict(type=int, help="outer reverse-diffusion steps (default 30)"),
    "S": dict(type=int, help="inner optimization iterations per step (default 200)"),
    "lambda_k": dict(type=float, help="kernel regularizer weight (default 2e-3)"),
    "lr_image": dict(type=float, help="denoiser learning rate (default 1e-3)"),
    "lr_kernel": dict(type=float, help="kernel generator learning rate (default 2.5e-4)"),
    "lr_decay": dict(action=argparse.BooleanOptionalAction,
                     help="decay the kernel learning rate 0.95x per outer step"),
    "beta_start": dict(type=float, help="schedule beta at the last step (default 1e-4)"),
    "beta_end": dict(type=float, help="schedule beta at the first step (default 2e-2)"),
    "mu": dict(type=float, help="kernel-noise scale relative to sigma_t (default 0.15)"),
    "reverse_beta": dict(action=argparse.BooleanOptionalAction,
                         help="flip the beta ramp direction"),
    "gen_mode": dict(choices=MODES, help="kernel generator architecture"),
    "hidden_dim": dict(type=int, help="kernel generator hidden width (default 1000)"),
    "num_hidden": dict(type=int, help="kernel generator hidden depth (default 5)"),
    "base_channels": dict(type=int, help="denoiser width (default 128)"),
    "boundary": dict(choices=BOUNDARY_MODES, help="convolution boundary handling"),
    "kernel_reg": dict(choices=KERNEL_REGULARIZERS, help="kernel regularizer form"),
    "seed": dict(type=int, help="base seed (default 0)"),
    "snapshot_every": dict(type=int, help="snapshot cadence in outer steps (0 = off)"),
}


def _existing_file(path):
    p = Path(path)
    if not p.is_file():
        raise argparse.ArgumentTypeError(f"no such file: {path}")
    return p


def _odd_int(text):
    value = int(text)
    if value <= 0 or value % 2 == 0:
        raise argparse.ArgumentTypeError(f"kernel size must be odd and positive, got {value}")
    return value


def _add_config_flags(parser, with_kernel_size=True):
    group = parser.add_argument_group("engine configuration")
    if with_kernel_size:
        group.add_argument("--kernel-size", type=_odd_int, default=None,
                           help="declared blur kernel size K (odd)")
    for name, spec in _CONFIG_FLAGS.items():
        group.add_argument(f"--{name.replace('_', '-')}", default=None,
                           dest=name, **spec)
    group.add_argument("--config", type=_existing_file, default=None,
                       help="load defaults from a previous run's config.txt")


def _resolve_config(args, parser):
    values = {f.name: f.default for f in fields(SDIConfig)}
    values["kernel_size"] = None
    if args.config is not None:
        try:
            values.update(config_from_text(args.config.read_text(encoding="utf-8")))
        except (ValidationError, ValueError, SyntaxError) as exc:
            parser.error(f"bad config file {args.config}: {exc}")
    for name in list(_CONFIG_FLAGS) + ["kernel_size"]:
        given = getattr(args, name, None)
        if given is not None:
            values[name] = given
    if values["kernel_size"] is None:
        parser.error("--kernel-size is required (directly or via --config)")
    try:
        config = SDIConfig(**values)
        config.validate()
    except (ValidationError, TypeError) as exc:
        parser.error(str(exc))
    return config


def _parse_values(text, axis):
    if axis != "generator" and ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError("range values must be start:stop:step")
        start, stop, step = (int(p) for p in parts)
        if step <= 0 or stop < start:
            raise argparse.ArgumentTypeError(f"bad range {text}")
        return list(range(start, stop + 1, step))
    items = [p.strip() for p in text.split(",") if p.strip()]
    if axis == "generator":
        return items
    return [int(p) for p in items]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="deblursdi",
        description="Zero-shot blind deblurring by reverse self-diffusion "
                    "over two untrained networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("deblur", help="recover a sharp image and kernel from one blurry image")
    p.add_argument("--input", type=_existing_file, required=True, help="blurry input image")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--truth-image", type=_existing_file, default=None,
                   help="optional sharp reference for per-step PSNR/SSIM")
    p.add_argument("--truth-kernel", type=_existing_file, default=None,
                   help="optional true kernel for similarity logging")
    p.add_argument("--quiet", action="store_true", help="suppress per-step progress lines")
    _add_config_flags(p)

    p = sub.add_parser("synth", help="generate blurred observations from sharp images and kernels")
    p.add_argument("--out", required=True, help="output directory (blurred/ + manifest.csv)")
    p.add_argument("--image", action="append", default=None, metavar="PNG",
                   help="sharp input image; repeatable; default: built-in test scene")
    p.add_argument("--kernel", action="append", default=None, metavar="TXT",
                   help="kernel text file; repeatable; default: built-in motion kernel")
    p.add_argument("--noise-std", type=float, default=0.0, help="additive Gaussian noise level")
    p.add_argument("--seed", type=int, default=0, help="noise seed")

    p = sub.add_parser("eval", help="deblur every pair in a manifest and score the results")
    p.add_argument("--manifest", type=_existing_file, required=True,
                   help="manifest.csv produced by synth")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1, help="parallel runs")
    _add_config_flags(p)

    p = sub.add_parser("sweep", help="run the engine across one config axis")
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", required=True,
                   help="comma list or start:stop:step range; generator axis takes "
                        "'standard' and 'diffusion:n' entries")
    p.add_argument("--out", required=True, help="output directory for sweep.csv/summary.csv")
    p.add_argument("--workers", type=int, default=1, help="parallel runs")
    p.add_argument("--instance-image", type=_existing_file, default=None,
                   help="sharp image for the test instance; default: built-in scene")
    p.add_argument("--instance-kernel", type=_existing_file, default=None,
                   help="true kernel for the test instance")
    p.add_argument("--noise-std", type=float, default=0.0,
                   help="noise level for the synthesized observation")
    _add_config_flags(p)

    p = sub.add_parser("schedule-dump", help="print the noise schedule as CSV")
    p.add_argument("--T", type=int, default=30)
    p.add_argument("--beta-start", type=float, default=1e-4)
    p.add_argument("--beta-end", type=float, default=2e-2)
    p.add_argument("--mu", type=float, default=0.15)
    p.add_argument("--reverse-beta", action="store_true")
    p.add_argument("--out", default=None, help="output file (default: stdout)")

    return parser


def _cmd_deblur(args, parser):
    config = _resolve_config(args, parser)
    y = load_image(args.input)
    truth_image = load_image(args.truth_image) if args.truth_image else None
    truth_kernel = load_kernel(args.truth_kernel) if args.truth_kernel else None
    result = run(
        y,
        config,
        truth_image=truth_image,
        truth_kernel=truth_kernel,
        out_dir=args.out,
        progress=not args.quiet,
    )
    last = result.trace[-1]
    line = f"done: loss={last.loss:.6e}"
    if last.psnr is not None:
        line += f" psnr={last.psnr:.2f} ssim={last.ssim:.4f}"
    if last.kernel_sim is not None:
        line += f" kernel_sim={last.kernel_sim:.4f}"
    print(line)
    return 0


def _cmd_synth(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    images = args.image
    kernels = args.kernel
    if images is None:
        builtin = out / "builtin_sharp.png"
        from .fileio import save_image

        save_image(builtin, benchmark_image(64))
        images = [builtin]
    if kernels is None:
        builtin = out / "builtin_kernel.txt"
        save_kernel(builtin, two_segment_motion_kernel(9))
        kernels = [builtin]
    pairs, rows = build_pairs(images, kernels, args.noise_std, args.seed, out)
    made = sum(1 for r in rows if r[2])
    print(f"wrote {made} blurred pair(s) and manifest.csv under {out}")
    return 0 if made else 1


def _cmd_eval(args, parser):
    config = _resolve_config(args, parser)
    results = evaluate_manifest(args.manifest, config, args.out, workers=args.workers)
    for row in results:
        print(f"{row.instance}: psnr={row.psnr:.2f} ssim={row.ssim:.4f} "
              f"kernel_sim={row.kernel_sim:.4f}")
    return 0


def _cmd_sweep(args, parser):
    config = _resolve_config(args, parser)
    try:
        values = _parse_values(args.values, args.axis)
    except argparse.ArgumentTypeError as exc:
        parser.error(str(exc))
    if args.instance_image is not None:
        if args.instance_kernel is None:
            parser.error("--instance-kernel is required with --instance-image")
        instance = make_instance(
            Path(args.instance_image).stem,
            load_image(args.instance_image),
            load_kernel(args.instance_kernel),
            noise_std=args.noise_std,
            seed=config.seed,
        )
    else:
        instance = benchmark_instance(noise_std=args.noise_std, seed=config.seed)
    save_instance(instance, Path(args.out) / "instance")
    spec = SweepSpec(
        axis=args.axis,
        values=values,
        base=config,
        instances=[instance],
        base_seed=config.seed,
        workers=args.workers,
    )
    rows = sweep(spec, out_dir=args.out)
    failed = [r for r in rows if r.error is not None]
    for row in rows:
        if row.error is None:
            print(f"{args.axis}={row.axis_value} {row.instance}: "
                  f"psnr={row.psnr:.2f} ssim={row.ssim:.4f} kernel_sim={row.kernel_sim:.4f}")
        else:
            print(f"{args.axis}={row.axis_value} {row.instance}: failed ({row.error})")
    return 1 if len(failed) == len(rows) else 0


def _cmd_schedule_dump(args):
    schedule = build_schedule(args.T, args.beta_start, args.beta_end, args.mu,
                              args.reverse_beta)
    lines = ["t,beta,alpha_bar,sigma,sigma_kernel"]
    lines += [",".join(f"{v:.12g}" for v in row) for row in schedule_rows(schedule)]
    text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    return 0


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "deblur":
            return _cmd_deblur(args, parser)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "eval":
            return _cmd_eval(args, parser)
        if args.command == "sweep":
            return _cmd_sweep(args, parser)
        return _cmd_schedule_dump(args)
    except NonFiniteLossError as exc:
        print(f"error: optimization diverged: {exc}", file=sys.stderr)
        return 1
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
