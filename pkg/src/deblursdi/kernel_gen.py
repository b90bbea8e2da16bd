"""Untrained kernel generator: a fully-connected network with a softmax head.

Two architectures share the softmax output over all K*K logits, which
guarantees a non-negative, unit-sum kernel for any parameters:

  standard    200 -> 2000 (ReLU6) -> K*K, with a latent that stays fixed
              for the whole run;
  diffusion   K*K -> H_d (ReLU) -> ... -> H_d (ReLU) -> K*K, num_hidden
              hidden layers in total, with a latent that evolves through
              the reverse-diffusion process.
"""

import numpy as np

from .errors import ValidationError
from .layers import Linear, collect_params

MODES = ("standard", "diffusion")

STANDARD_LATENT_DIM = 200
STANDARD_HIDDEN_DIM = 2000


def latent_length(mode, kernel_size):
    return STANDARD_LATENT_DIM if mode == "standard" else kernel_size * kernel_size


def sample_latent(mode, kernel_size, seed):
    """Seeded standard-normal latent; read-only in standard mode (fixed for the run)."""
    _check_mode(mode)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(latent_length(mode, kernel_size))
    if mode == "standard":
        z.flags.writeable = False
    return z


def _check_mode(mode):
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")


class KernelGenerator:
    def __init__(self, mode, kernel_size, hidden_dim=1000, num_hidden=5, seed=0):
        _check_mode(mode)
        if kernel_size <= 0 or kernel_size % 2 == 0:
            raise ValidationError(f"kernel size must be odd and positive, got {kernel_size}")
        if hidden_dim < 1 or num_hidden < 1:
            raise ValidationError("hidden_dim and num_hidden must be >= 1")
        self.mode = mode
        self.kernel_size = kernel_size
        self.hidden_dim = hidden_dim
        self.num_hidden = num_hidden
        k2 = kernel_size * kernel_size
        rng = np.random.default_rng(seed)
        if mode == "standard":
            dims = [STANDARD_LATENT_DIM, STANDARD_HIDDEN_DIM, k2]
        else:
            dims = [k2] + [hidden_dim] * num_hidden + [k2]
        self.layers = [Linear(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)]
        self._hidden_pre = None
        self._kernel = None
        self.last_logits = None

    @property
    def latent_dim(self):
        return latent_length(self.mode, self.kernel_size)

    def forward(self, latent):
        latent = np.asarray(latent, dtype=np.float64)
        if latent.shape != (self.latent_dim,):
            raise ValidationError(
                f"latent must have shape ({self.latent_dim},), got {latent.shape}"
            )
        h = latent
        pre = []
        for layer in self.layers[:-1]:
            a = layer.forward(h)
            pre.append(a)
            h = np.clip(a, 0.0, 6.0) if self.mode == "standard" else np.maximum(a, 0.0)
        logits = self.layers[-1].forward(h)
        shifted = np.exp(logits - logits.max())
        kernel = shifted / shifted.sum()
        self._hidden_pre = pre
        self._kernel = kernel
        self.last_logits = logits
        return kernel.reshape(self.kernel_size, self.kernel_size)

    def backward(self, dkernel, dlogits_extra=None):
        """Accumulate parameter gradients for upstream d(loss)/d(kernel).

        `dlogits_extra` injects an additional gradient directly at the
        pre-softmax logits (used by the pre-softmax regularizer).
        """
        k = self._kernel
        dk = np.asarray(dkernel, dtype=np.float64).reshape(-1)
        dlogits = k * (dk - float(dk @ k))
        if dlogits_extra is not None:
            dlogits = dlogits + dlogits_extra
        dh = self.layers[-1].backward(dlogits)
        for layer, a in zip(reversed(self.layers[:-1]), reversed(self._hidden_pre)):
            if self.mode == "standard":
                dh = np.where((a > 0.0) & (a < 6.0), dh, 0.0)
            else:
                dh = np.where(a > 0.0, dh, 0.0)
            dh = layer.backward(dh)
        return dh

    def params(self):
        return collect_params(
            (f"linear{i}", layer) for i, layer in enumerate(self.layers)
        )

    def zero_grads(self):
        for _, (_, grad) in self.params().items():
            grad[...] = 0.0
