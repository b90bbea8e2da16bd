"""Blur degradation model.

Images are float64 arrays of shape (H, W, C) with C in {1, 3}; blur
kernels are odd-sized (K, K) arrays, non-negative and summing to one.
Convolution is true convolution (kernel flipped), applied to every channel
with the same kernel, "same" output size. Boundary handling is circular by
default; "reflect" mirrors without repeating the edge sample.

`BlurConv` is the differentiable version used inside the optimization
loss: it exposes the gradient w.r.t. both the image and the kernel.
"""

import numpy as np

from .backend import kernels
from .errors import DimensionError, ValidationError

BOUNDARY_MODES = ("circular", "reflect")

_KERNEL_SUM_TOL = 1e-6


def as_image(arr):
    """Coerce to a (H, W, C) float64 image array; 2-D input gains a channel axis."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] not in (1, 3):
        raise ValidationError(f"expected (H, W) or (H, W, C) with C in {{1,3}}, got {a.shape}")
    return a


def validate_image(img, name="image"):
    img = as_image(img)
    if not np.all(np.isfinite(img)):
        raise ValidationError(f"{name} contains non-finite values")
    return img


def validate_kernel(k, name="kernel"):
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValidationError(f"{name} must be square 2-D, got {k.shape}")
    if k.shape[0] % 2 == 0:
        raise ValidationError(f"{name} size must be odd, got {k.shape[0]}")
    if not np.all(np.isfinite(k)):
        raise ValidationError(f"{name} contains non-finite values")
    if k.min() < 0:
        raise ValidationError(f"{name} has negative weights (min {k.min():g})")
    s = k.sum()
    if abs(s - 1.0) > _KERNEL_SUM_TOL:
        raise ValidationError(f"{name} must sum to 1 within {_KERNEL_SUM_TOL:g}, got {s!r}")
    return k


def _check_boundary(boundary):
    if boundary not in BOUNDARY_MODES:
        raise ValidationError(f"boundary must be one of {BOUNDARY_MODES}, got {boundary!r}")


def _pad_maps(h, w, r, boundary):
    # Index maps that realize the padding as a gather, so the transpose is a scatter.
    if boundary == "circular":
        mi = np.arange(-r, h + r) % h
        mj = np.arange(-r, w + r) % w
    else:
        mi = np.pad(np.arange(h), r, mode="reflect")
        mj = np.pad(np.arange(w), r, mode="reflect")
    return mi, mj


def _pad(img, r, boundary):
    if r == 0:
        return img
    mi, mj = _pad_maps(img.shape[0], img.shape[1], r, boundary)
    return np.ascontiguousarray(img[mi][:, mj])


def _check_conv_args(image, kernel, boundary):
    image = validate_image(image)
    kernel = validate_kernel(kernel)
    _check_boundary(boundary)
    kk = kernel.shape[0]
    if kk > min(image.shape[0], image.shape[1]):
        raise DimensionError(
            f"kernel size {kk} exceeds image extent {image.shape[0]}x{image.shape[1]}"
        )
    return image, kernel


def convolve_direct(image, kernel, boundary="circular"):
    """Spatial-domain blur: same-size true convolution of every channel."""
    image, kernel = _check_conv_args(image, kernel, boundary)
    r = kernel.shape[0] // 2
    xp = _pad(image, r, boundary)
    return kernels().psf_correlate(xp, np.ascontiguousarray(kernel[::-1, ::-1]))


def _embed_kernel(kernel, h, w):
    # Center tap goes to [0, 0]; offsets wrap, matching circular convolution.
    kk = kernel.shape[0]
    r = kk // 2
    ke = np.zeros((h, w))
    rows = (np.arange(kk) - r) % h
    cols = (np.arange(kk) - r) % w
    ke[np.ix_(rows, cols)] = kernel
    return ke


def convolve_fft(image, kernel):
    """Frequency-domain blur; boundary is implicitly circular."""
    image, kernel = _check_conv_args(image, kernel, "circular")
    h, w, _ = image.shape
    kf = np.fft.rfft2(_embed_kernel(kernel, h, w))
    xf = np.fft.rfft2(image, axes=(0, 1))
    return np.fft.irfft2(xf * kf[:, :, None], s=(h, w), axes=(0, 1))


def synthesize_observation(sharp, kernel, noise_std=0.0, seed=0, boundary="circular"):
    """Blur a sharp image and add seeded Gaussian noise, clamped to [0, 1]."""
    if noise_std < 0:
        raise ValidationError(f"noise_std must be >= 0, got {noise_std}")
    blurred = convolve_direct(sharp, kernel, boundary)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        blurred = blurred + noise_std * rng.standard_normal(blurred.shape)
    return np.clip(blurred, 0.0, 1.0)


class BlurConv:
    """Differentiable blur convolution for the data-consistency loss.

    Circular boundary runs through rFFT (kernel gradients via the
    correlation theorem); reflect falls back to the direct path with a
    scatter-add transpose of the padding.
    """

    def __init__(self, boundary="circular"):
        _check_boundary(boundary)
        self.boundary = boundary
        self._cache = None

    def forward(self, x, k):
        h, w, _ = x.shape
        kk = k.shape[0]
        if kk > min(h, w):
            raise DimensionError(f"kernel size {kk} exceeds image extent {h}x{w}")
        r = kk // 2
        if self.boundary == "circular":
            kf = np.fft.rfft2(_embed_kernel(k, h, w))
            xf = np.fft.rfft2(x, axes=(0, 1))
            y = np.fft.irfft2(xf * kf[:, :, None], s=(h, w), axes=(0, 1))
            self._cache = ("fft", xf, kf, h, w, kk)
        else:
            xp = _pad(x, r, self.boundary)
            y = kernels().psf_correlate(xp, np.ascontiguousarray(k[::-1, ::-1]))
            self._cache = ("direct", xp, k, h, w, kk)
        return y

    def backward(self, g):
        """Return (dL/dx, dL/dk) for upstream gradient g of the forward output."""
        kind = self._cache[0]
        if kind == "fft":
            _, xf, kf, h, w, kk = self._cache
            gf = np.fft.rfft2(g, axes=(0, 1))
            dx = np.fft.irfft2(gf * np.conj(kf)[:, :, None], s=(h, w), axes=(0, 1))
            dke = np.fft.irfft2(np.sum(np.conj(xf) * gf, axis=2), s=(h, w))
            r = kk // 2
            rows = (np.arange(kk) - r) % h
            cols = (np.arange(kk) - r) % w
            dk = dke[np.ix_(rows, cols)]
        else:
            _, xp, k, h, w, kk = self._cache
            r = kk // 2
            gp = np.zeros((h + 2 * (kk - 1), w + 2 * (kk - 1), g.shape[2]))
            gp[kk - 1:kk - 1 + h, kk - 1:kk - 1 + w] = g
            dxp = kernels().psf_correlate(gp, np.ascontiguousarray(k))
            mi, mj = _pad_maps(h, w, r, self.boundary)
            dx = np.zeros((h, w, g.shape[2]))
            np.add.at(dx, (mi[:, None], mj[None, :]), dxp)
            dk = kernels().psf_grad_kernel(xp, np.ascontiguousarray(g))[::-1, ::-1].copy()
        return dx, dk
