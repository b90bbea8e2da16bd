"""Reverse self-diffusion engine for joint image and kernel recovery.

One run owns two freshly initialized networks and walks T outer steps from
pure noise. Each outer step perturbs the current estimates with scheduled
noise (sampled once per step), then jointly optimizes both networks for S
inner iterations against the blur data-consistency loss plus a kernel
regularizer, and finally hands the networks' outputs to the next step.
Everything is keyed off the config seed, so runs are bit-reproducible.
"""

import ast
import logging
import sys
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .denoiser import Denoiser
from .errors import NonFiniteLossError, ValidationError
from .fileio import save_image, save_kernel, save_kernel_png
from .forward_model import BOUNDARY_MODES, BlurConv, validate_image
from .kernel_gen import MODES, KernelGenerator, sample_latent
from .metrics import kernel_similarity, psnr, ssim
from .optim import Adam, ParamGroup, decay_kernel_lr
from .schedule import build_schedule, perturb
from .seeding import derive_seed

log = logging.getLogger("deblursdi")

KERNEL_REGULARIZERS = ("l1", "l1-presoftmax", "sqrt-sparsity", "none")

TRACE_HEADER = "step,loss,psnr,ssim,kernel_lr"


@dataclass(frozen=True)
class SDIConfig:
    kernel_size: int
    T: int = 30
    S: int = 200
    lambda_k: float = 2e-3
    lr_image: float = 1e-3
    lr_kernel: float = 2.5e-4
    lr_decay: bool = True
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    mu: float = 0.15
    reverse_beta: bool = False
    gen_mode: str = "diffusion"
    hidden_dim: int = 1000
    num_hidden: int = 5
    base_channels: int = 128
    boundary: str = "circular"
    kernel_reg: str = "l1"
    seed: int = 0
    snapshot_every: int = 0

    def validate(self):
        if self.T < 2:
            raise ValidationError(f"T must be >= 2, got {self.T}")
        if self.S < 1:
            raise ValidationError(f"S must be >= 1, got {self.S}")
        if self.kernel_size <= 0 or self.kernel_size % 2 == 0:
            raise ValidationError(f"kernel size must be odd, got {self.kernel_size}")
        if self.lambda_k < 0:
            raise ValidationError(f"lambda_k must be >= 0, got {self.lambda_k}")
        if self.lr_image <= 0 or self.lr_kernel <= 0:
            raise ValidationError("learning rates must be > 0")
        if self.gen_mode not in MODES:
            raise ValidationError(f"gen_mode must be one of {MODES}")
        if self.boundary not in BOUNDARY_MODES:
            raise ValidationError(f"boundary must be one of {BOUNDARY_MODES}")
        if self.kernel_reg not in KERNEL_REGULARIZERS:
            raise ValidationError(f"kernel_reg must be one of {KERNEL_REGULARIZERS}")
        if self.seed < 0:
            raise ValidationError(f"seed must be >= 0, got {self.seed}")
        if self.snapshot_every < 0:
            raise ValidationError(f"snapshot_every must be >= 0, got {self.snapshot_every}")


def config_to_text(config):
    lines = [f"{f.name} = {getattr(config, f.name)!r}" for f in fields(config)]
    return "\n".join(lines) + "\n"


def config_from_text(text):
    values = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = ast.literal_eval(value.strip())
    names = {f.name for f in fields(SDIConfig)}
    unknown = set(values) - names
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    return values


@dataclass
class StepRecord:
    t: int
    loss: float
    loss_first: float
    psnr: float = None
    ssim: float = None
    kernel_sim: float = None
    kernel_lr: float = 0.0
    image_path: str = None
    kernel_path: str = None


@dataclass
class RunResult:
    image: np.ndarray
    kernel: np.ndarray
    trace: list = field(default_factory=list)


def kernel_regularizer(kernel, logits, kind):
    """Value and gradients of the kernel prior R. Returns (value, dk, dlogits)."""
    flat = kernel.reshape(-1)
    if kind == "l1":
        # Inert on the softmax simplex (sum is identically 1) but kept verbatim.
        return float(np.abs(flat).sum()), np.sign(flat).reshape(kernel.shape), None
    if kind == "sqrt-sparsity":
        root = np.sqrt(flat + 1e-12)
        return float(root.sum()), (0.5 / root).reshape(kernel.shape), None
    if kind == "l1-presoftmax":
        return float(np.abs(logits).sum()), None, np.sign(logits)
    return 0.0, None, None


def composite_loss(x_den, kernel, y, lambda_k, boundary="circular", kernel_reg="l1"):
    """Data consistency ||x_den (*) kernel - y||^2 summed, plus lambda_k * R(kernel)."""
    blur = BlurConv(boundary)
    resid = blur.forward(np.asarray(x_den, dtype=np.float64), np.asarray(kernel)) - y
    reg, _, _ = kernel_regularizer(np.asarray(kernel), None, kernel_reg)
    return float(np.sum(resid * resid)) + lambda_k * reg


class _LossEvaluator:
    """Forward + backward of the composite loss through both networks."""

    def __init__(self, denoiser, generator, config):
        self.denoiser = denoiser
        self.generator = generator
        self.blur = BlurConv(config.boundary)
        self.lambda_k = config.lambda_k
        self.kernel_reg = config.kernel_reg

    def forward(self, xhat, zhat):
        x_den = self.denoiser.forward(xhat)
        kernel = self.generator.forward(zhat)
        return x_den, kernel

    def loss_value(self, x_den, kernel, y):
        resid = self.blur.forward(x_den, kernel) - y
        reg, dk_reg, dlogits_reg = kernel_regularizer(
            kernel, self.generator.last_logits, self.kernel_reg
        )
        loss = float(np.sum(resid * resid)) + self.lambda_k * reg
        return loss, resid, dk_reg, dlogits_reg

    def loss_and_grads(self, xhat, zhat, y):
        x_den, kernel = self.forward(xhat, zhat)
        loss, resid, dk_reg, dlogits_reg = self.loss_value(x_den, kernel, y)
        if not np.isfinite(loss):
            return loss
        dx, dk = self.blur.backward(2.0 * resid)
        if dk_reg is not None:
            dk = dk + self.lambda_k * dk_reg
        dlogits = None if dlogits_reg is None else self.lambda_k * dlogits_reg
        self.denoiser.backward(dx)
        self.generator.backward(dk, dlogits_extra=dlogits)
        return loss


class _RunWriter:
    """Best-effort persistence of the run directory; I/O errors only warn."""

    def __init__(self, out_dir, config):
        from pathlib import Path

        self.root = Path(out_dir)
        self.snap_dir = self.root / "snapshots"
        self.root.mkdir(parents=True, exist_ok=True)
        self._write_text(self.root / "config.txt", config_to_text(config))
        self._snap_rows = []

    def _write_text(self, path, text):
        try:
            path.write_text(text, encoding="utf-8")
        except OSError as exc:
            log.warning("failed to write %s: %s", path, exc)

    def snapshot(self, t, image, kernel):
        try:
            self.snap_dir.mkdir(exist_ok=True)
            img_path = self.snap_dir / f"step_{t:03d}.png"
            ker_txt = self.snap_dir / f"step_{t:03d}_kernel.txt"
            ker_png = self.snap_dir / f"step_{t:03d}_kernel.png"
            save_image(img_path, image)
            save_kernel(ker_txt, kernel)
            save_kernel_png(ker_png, kernel)
            self._snap_rows.append(f"{t},{img_path.name},{ker_txt.name},{ker_png.name}")
            self._write_text(
                self.snap_dir / "snapshots.csv",
                "step,image,kernel_txt,kernel_png\n" + "\n".join(self._snap_rows) + "\n",
            )
            return str(img_path), str(ker_txt)
        except OSError as exc:
            log.warning("snapshot at step %d failed: %s", t, exc)
            return None, None

    def finalize(self, image, kernel, trace):
        try:
            save_image(self.root / "result_image.png", image)
            save_kernel(self.root / "result_kernel.txt", kernel)
            save_kernel_png(self.root / "result_kernel.png", kernel)
        except OSError as exc:
            log.warning("failed to write results: %s", exc)
        self.write_trace(trace)

    def write_trace(self, trace):
        self._write_text(self.root / "trace.csv", trace_to_csv(trace))


def trace_to_csv(trace):
    def fmt(v):
        return "" if v is None else f"{v:.12g}"

    rows = [TRACE_HEADER]
    rows += [
        f"{r.t},{fmt(r.loss)},{fmt(r.psnr)},{fmt(r.ssim)},{fmt(r.kernel_lr)}"
        for r in trace
    ]
    return "\n".join(rows) + "\n"


def run(y, config, truth_image=None, truth_kernel=None, out_dir=None, progress=False):
    """Execute the full reverse self-diffusion process on observation y.

    Returns a RunResult with the recovered image x_0, the recovered kernel
    (the generator's output on the final noisy latent), and one trace
    record per outer step. When ground truth is supplied, PSNR/SSIM are
    logged per step. Aborts with NonFiniteLossError (carrying the partial
    trace) if an entire outer step never sees a finite loss.
    """
    config.validate()
    y = validate_image(y, "observation")
    if y.min() < 0 or y.max() > 1:
        raise ValidationError("observation must lie in [0, 1]")
    if truth_image is not None:
        truth_image = validate_image(truth_image, "truth_image")
    h, w, c = y.shape
    seed = config.seed

    schedule = build_schedule(
        config.T, config.beta_start, config.beta_end, config.mu, config.reverse_beta
    )
    denoiser = Denoiser(c, config.base_channels, seed=derive_seed(seed, "denoiser-init"))
    generator = KernelGenerator(
        config.gen_mode,
        config.kernel_size,
        hidden_dim=config.hidden_dim,
        num_hidden=config.num_hidden,
        seed=derive_seed(seed, "kernelgen-init"),
    )
    adam = Adam(
        [
            ParamGroup("denoiser", config.lr_image, denoiser.params()),
            ParamGroup("kernel_gen", config.lr_kernel, generator.params()),
        ]
    )
    evaluator = _LossEvaluator(denoiser, generator, config)

    x_t = np.random.default_rng(derive_seed(seed, "image-init")).standard_normal((h, w, c))
    z_t = sample_latent(config.gen_mode, config.kernel_size, derive_seed(seed, "latent-init"))

    writer = _RunWriter(out_dir, config) if out_dir is not None else None
    trace = []
    kernel_lr = config.lr_kernel
    started = time.perf_counter()

    for t in range(config.T, 0, -1):
        sigma_t = schedule.sigma[t - 1]
        sigma_kernel_t = schedule.sigma_kernel[t - 1]
        xhat = perturb(x_t, sigma_t, derive_seed(seed, "eps-image", t))
        zhat = perturb(z_t, sigma_kernel_t, derive_seed(seed, "eps-latent", t))

        loss_first = None
        finite_seen = False
        for _ in range(config.S):
            adam.zero_grads()
            loss = evaluator.loss_and_grads(xhat, zhat, y)
            if loss_first is None:
                loss_first = loss
            if np.isfinite(loss):
                finite_seen = True
                adam.step()
            else:
                log.warning("non-finite loss at outer step %d; inner update skipped", t)

        # hand-off: next estimates come from the freshly updated networks
        x_next, k_t = evaluator.forward(xhat, zhat)
        final_loss, _, _, _ = evaluator.loss_value(x_next, k_t, y)
        if not finite_seen or not np.isfinite(final_loss):
            if writer is not None:
                writer.write_trace(trace)
            raise NonFiniteLossError(
                f"outer step {t} produced no finite loss", trace=trace
            )

        record = StepRecord(t=t, loss=final_loss, loss_first=loss_first, kernel_lr=kernel_lr)
        if truth_image is not None:
            record.psnr = psnr(truth_image, x_next)
            record.ssim = ssim(truth_image, x_next)
        if truth_kernel is not None:
            record.kernel_sim = kernel_similarity(truth_kernel, k_t)
        x_t = x_next
        if config.gen_mode == "diffusion":
            z_t = k_t.reshape(-1).copy()

        if writer is not None and config.snapshot_every and (
            t % config.snapshot_every == 0 or t == 1
        ):
            record.image_path, record.kernel_path = writer.snapshot(t, x_t, k_t)
        trace.append(record)

        if config.lr_decay:
            kernel_lr = decay_kernel_lr(kernel_lr)
            adam.set_learning_rate("kernel_gen", kernel_lr)
        if progress:
            print(
                f"step={t} loss={final_loss:.6e} sigma={sigma_t:.4f} "
                f"kernel_lr={record.kernel_lr:.3e} "
                f"elapsed={time.perf_counter() - started:.1f}s",
                file=sys.stderr,
                flush=True,
            )

    result = RunResult(image=x_t, kernel=k_t, trace=trace)
    if writer is not None:
        writer.finalize(result.image, result.kernel, trace)
    return result


def replace_config(config, **overrides):
    updated = replace(config, **overrides)
    updated.validate()
    return updated
