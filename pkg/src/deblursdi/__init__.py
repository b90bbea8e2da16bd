"""Zero-shot blind image deblurring by reverse self-diffusion.

Jointly recovers a sharp image and a blur kernel from a single blurry
observation by optimizing two untrained networks (an image denoiser and a
kernel generator) inside a reverse diffusion loop. No training data, no
pretrained weights; each run fits its networks to one image from scratch.
"""

from .backend import available_backends, get_backend, set_backend
from .denoiser import Denoiser
from .engine import RunResult, SDIConfig, StepRecord, composite_loss, run
from .errors import (
    DimensionError,
    NonFiniteLossError,
    ValidationError,
)
from .forward_model import (
    BlurConv,
    convolve_direct,
    convolve_fft,
    synthesize_observation,
)
from .harness import SweepInstance, SweepSpec, benchmark_instance, build_pairs, sweep
from .kernel_gen import KernelGenerator, sample_latent
from .metrics import kernel_similarity, psnr, ssim
from .schedule import NoiseSchedule, build_schedule, perturb
from .seeding import derive_seed
from .synthetic import (
    benchmark_image,
    delta_kernel,
    gaussian_kernel,
    two_segment_motion_kernel,
)

__version__ = "0.1.0"

__all__ = [
    "BlurConv",
    "Denoiser",
    "DimensionError",
    "KernelGenerator",
    "NoiseSchedule",
    "NonFiniteLossError",
    "RunResult",
    "SDIConfig",
    "StepRecord",
    "SweepInstance",
    "SweepSpec",
    "ValidationError",
    "available_backends",
    "benchmark_image",
    "benchmark_instance",
    "build_pairs",
    "build_schedule",
    "composite_loss",
    "convolve_direct",
    "convolve_fft",
    "delta_kernel",
    "derive_seed",
    "gaussian_kernel",
    "get_backend",
    "kernel_similarity",
    "perturb",
    "psnr",
    "run",
    "sample_latent",
    "set_backend",
    "ssim",
    "sweep",
    "synthesize_observation",
    "two_segment_motion_kernel",
    "__version__",
]
