"""Regenerate the frozen reference files in this directory.

Run from the repository root: python3 tests/data/make_goldens.py

The schedule table comes from the independent scalar-formula oracle. The
kernel-generator goldens take seeded parameters from the package but
recompute the forward pass here with plain matrix products, so they pin
both the initialization scheme and the forward semantics. The denoiser
file is a self-golden: it freezes current behavior to catch accidental
changes, and regenerating it deliberately re-pins that behavior.
"""

import pathlib
import sys

import numpy as np

HERE = pathlib.Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))

from oracles import schedule_reference  # noqa: E402


def write_schedule():
    rows = schedule_reference(30, 1e-4, 2e-2, 0.15)
    lines = ["beta,alpha_bar,sigma,sigma_kernel"]
    lines += [",".join(f"{v:.17g}" for v in row) for row in rows]
    (HERE / "schedule_T30.csv").write_text("\n".join(lines) + "\n")


def _forward_by_hand(layers, latent, hidden_act):
    h = np.asarray(latent, dtype=np.float64)
    for layer in layers[:-1]:
        h = hidden_act(h @ layer.w + layer.b)
    logits = h @ layers[-1].w + layers[-1].b
    e = np.exp(logits - logits.max())
    return e / e.sum()


def write_kernel_gen():
    from deblursdi.kernel_gen import KernelGenerator, sample_latent

    gen = KernelGenerator("standard", 5, seed=7)
    z = sample_latent("standard", 5, seed=11)
    k = _forward_by_hand(gen.layers, z, lambda a: np.minimum(np.maximum(a, 0.0), 6.0))
    np.savetxt(HERE / "kernel_gen_standard_k5.txt", k, fmt="%.17g")

    gen = KernelGenerator("diffusion", 5, hidden_dim=64, num_hidden=2, seed=7)
    z = sample_latent("diffusion", 5, seed=11)
    k = _forward_by_hand(gen.layers, z, lambda a: np.maximum(a, 0.0))
    np.savetxt(HERE / "kernel_gen_diffusion_k5.txt", k, fmt="%.17g")


def write_denoiser():
    from deblursdi import backend
    from deblursdi.denoiser import Denoiser

    backend.set_backend("numpy")
    net = Denoiser(1, base_channels=16, seed=123)
    x = np.random.default_rng(99).standard_normal((16, 16, 1))
    y = net.forward(x)
    flat = y.reshape(-1)
    sampled = flat[:: max(1, flat.size // 16)][:16]
    lines = [
        f"mean {y.mean():.17g}",
        f"std {y.std():.17g}",
        f"min {y.min():.17g}",
        f"max {y.max():.17g}",
    ]
    lines += [f"sample{i} {v:.17g}" for i, v in enumerate(sampled)]
    (HERE / "denoiser_forward_16x16.txt").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    write_schedule()
    write_kernel_gen()
    write_denoiser()
    print("goldens written to", HERE)
