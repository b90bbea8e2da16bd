"""Evaluation harness: synthetic pair assembly, batch evaluation, sweeps.

A sweep runs the engine once per (instance, axis value), overriding one
config field at a time, and writes per-run rows plus a mean/std summary.
Each run derives its own seed from (base seed, instance name, axis value),
so results do not depend on scheduling order or worker count.
"""

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .engine import SDIConfig, run
from .errors import ValidationError
from .fileio import load_image, load_kernel, save_image, save_kernel
from .forward_model import synthesize_observation, validate_image, validate_kernel
from .metrics import kernel_similarity, psnr, ssim
from .seeding import derive_seed
from .synthetic import benchmark_image, two_segment_motion_kernel

log = logging.getLogger("deblursdi")

SWEEP_AXES = ("kernel_size", "T", "S", "generator")

SWEEP_HEADER = "axis_value,instance,psnr,ssim,kernel_sim,runtime_s"
SUMMARY_HEADER = (
    "axis_value,runs,psnr_mean,psnr_std,ssim_mean,ssim_std,"
    "kernel_sim_mean,kernel_sim_std"
)
MANIFEST_HEADER = "image,kernel,blurred,noise_std,seed"


@dataclass
class SweepInstance:
    name: str
    sharp: np.ndarray
    kernel: np.ndarray
    observation: np.ndarray


@dataclass
class SweepSpec:
    axis: str
    values: list
    base: SDIConfig
    instances: list
    base_seed: int = 0
    workers: int = 1

    def validate(self):
        if self.axis not in SWEEP_AXES:
            raise ValidationError(f"axis must be one of {SWEEP_AXES}")
        if not self.values:
            raise ValidationError("sweep needs at least one axis value")
        if not self.instances:
            raise ValidationError("sweep needs at least one instance")
        if self.axis == "kernel_size":
            for v in self.values:
                if int(v) % 2 == 0:
                    raise ValidationError(f"kernel sizes must be odd, got {v}")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")


def make_instance(name, sharp, kernel, noise_std=0.0, seed=0, boundary="circular"):
    sharp = validate_image(sharp, "sharp")
    kernel = validate_kernel(kernel)
    y = synthesize_observation(sharp, kernel, noise_std, seed, boundary)
    return SweepInstance(name=name, sharp=sharp, kernel=kernel, observation=y)


def benchmark_instance(noise_std=0.0, seed=0):
    """The 64x64 scene under the bent 9x9 motion kernel."""
    return make_instance(
        "bench64",
        benchmark_image(64),
        two_segment_motion_kernel(9),
        noise_std=noise_std,
        seed=derive_seed(seed, "bench-noise"),
    )


def apply_axis(config, axis, value):
    """New config with one sweep axis overridden; value may be a string."""
    if axis == "kernel_size":
        return replace(config, kernel_size=int(value))
    if axis == "T":
        return replace(config, T=int(value))
    if axis == "S":
        return replace(config, S=int(value))
    if axis == "generator":
        text = str(value)
        if text == "standard":
            return replace(config, gen_mode="standard")
        mode, _, depth = text.partition(":")
        if mode != "diffusion":
            raise ValidationError(
                f"generator axis value must be 'standard' or 'diffusion:n', got {value!r}"
            )
        num_hidden = int(depth) if depth else config.num_hidden
        return replace(config, gen_mode="diffusion", num_hidden=num_hidden)
    raise ValidationError(f"axis must be one of {SWEEP_AXES}")


@dataclass
class SweepRow:
    axis_value: str
    instance: str
    psnr: float = None
    ssim: float = None
    kernel_sim: float = None
    runtime_s: float = None
    error: str = field(default=None, repr=False)


def _run_cell(spec, instance, value):
    config = apply_axis(spec.base, spec.axis, value)
    config = replace(
        config, seed=derive_seed(spec.base_seed, f"sweep:{instance.name}:{value}")
    )
    started = time.perf_counter()
    try:
        config.validate()
        result = run(instance.observation, config)
    except Exception as exc:  # noqa: BLE001 - one bad cell must not kill the sweep
        log.warning("sweep cell (%s=%s, %s) failed: %s", spec.axis, value, instance.name, exc)
        return SweepRow(str(value), instance.name, error=str(exc))
    elapsed = time.perf_counter() - started
    return SweepRow(
        str(value),
        instance.name,
        psnr=psnr(instance.sharp, result.image),
        ssim=ssim(instance.sharp, result.image),
        kernel_sim=kernel_similarity(instance.kernel, result.kernel),
        runtime_s=elapsed,
    )


def _fmt(v):
    return "" if v is None else f"{v:.6f}"


def sweep(spec, out_dir=None):
    """Run every (axis value, instance) cell; returns the row list."""
    spec.validate()
    cells = [(value, inst) for value in spec.values for inst in spec.instances]
    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(
                pool.map(lambda cell: _run_cell(spec, cell[1], cell[0]), cells)
            )
    else:
        rows = [_run_cell(spec, inst, value) for value, inst in cells]

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_sweep_csv(out / "sweep.csv", rows)
        write_summary_csv(out / "summary.csv", spec.values, rows)
    return rows


def write_sweep_csv(path, rows):
    lines = [SWEEP_HEADER]
    lines += [
        f"{r.axis_value},{r.instance},{_fmt(r.psnr)},{_fmt(r.ssim)},"
        f"{_fmt(r.kernel_sim)},{_fmt(r.runtime_s)}"
        for r in rows
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_summary_csv(path, values, rows):
    lines = [SUMMARY_HEADER]
    for value in values:
        ok = [r for r in rows if r.axis_value == str(value) and r.error is None]
        if ok:
            def stat(pick):
                data = np.array([pick(r) for r in ok], dtype=np.float64)
                return f"{data.mean():.6f},{data.std():.6f}"

            lines.append(
                f"{value},{len(ok)},{stat(lambda r: r.psnr)},"
                f"{stat(lambda r: r.ssim)},{stat(lambda r: r.kernel_sim)}"
            )
        else:
            lines.append(f"{value},0,,,,,,")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def build_pairs(image_paths, kernel_paths, noise_std, seed, out_dir):
    """Blur every image with every kernel; returns manifest rows.

    Unreadable inputs are skipped with a warning and recorded in the
    manifest as rows with an empty blurred column.
    """
    if not kernel_paths:
        raise ValidationError("need at least one kernel")
    if not image_paths:
        raise ValidationError("need at least one image")
    out = Path(out_dir)
    blurred_dir = out / "blurred"
    blurred_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    pairs = []
    index = 0
    for img_path in image_paths:
        for ker_path in kernel_paths:
            pair_seed = derive_seed(seed, "pair", index)
            index += 1
            try:
                sharp = load_image(img_path)
                kernel = load_kernel(ker_path)
                y = synthesize_observation(sharp, kernel, noise_std, pair_seed)
            except (OSError, ValidationError) as exc:
                log.warning("skipping pair (%s, %s): %s", img_path, ker_path, exc)
                rows.append((str(img_path), str(ker_path), "", noise_std, pair_seed))
                continue
            name = f"{Path(img_path).stem}__{Path(ker_path).stem}.png"
            save_image(blurred_dir / name, y)
            rows.append(
                (str(img_path), str(ker_path), str(blurred_dir / name), noise_std, pair_seed)
            )
            pairs.append((sharp, kernel, y))

    with open(out / "manifest.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER.split(","))
        writer.writerows(rows)
    return pairs, rows


def read_manifest(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_HEADER.split(","):
            raise ValidationError(
                f"manifest header must be {MANIFEST_HEADER!r}, got {reader.fieldnames}"
            )
        return [row for row in reader]


def evaluate_manifest(manifest_path, config, out_dir, workers=1):
    """Deblur each manifest pair and score against its recorded truth."""
    rows = [r for r in read_manifest(manifest_path) if r["blurred"]]
    if not rows:
        raise ValidationError("manifest has no usable pairs")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def one(item):
        idx, row = item
        y = load_image(row["blurred"])
        sharp = load_image(row["image"])
        kernel = load_kernel(row["kernel"])
        cfg = replace(config, seed=derive_seed(config.seed, "eval", idx))
        started = time.perf_counter()
        result = run(y, cfg, out_dir=out / f"pair_{idx:03d}")
        return SweepRow(
            axis_value=f"pair_{idx:03d}",
            instance=Path(row["blurred"]).stem,
            psnr=psnr(sharp, result.image),
            ssim=ssim(sharp, result.image),
            kernel_sim=kernel_similarity(kernel, result.kernel),
            runtime_s=time.perf_counter() - started,
        )

    items = list(enumerate(rows))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, items))
    else:
        results = [one(item) for item in items]
    write_sweep_csv(out / "eval.csv", results)
    return results


def save_instance(instance, out_dir):
    """Persist an instance's sharp/kernel/observation for reuse."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_image(out / f"{instance.name}_sharp.png", instance.sharp)
    save_kernel(out / f"{instance.name}_kernel.txt", instance.kernel)
    save_image(out / f"{instance.name}_blurred.png", instance.observation)
    return out
