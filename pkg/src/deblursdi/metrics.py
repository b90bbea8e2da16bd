"""Image and kernel quality metrics.

PSNR and SSIM assume a dynamic range of 1. SSIM uses the original windowed
formulation (11x11 Gaussian, sigma 1.5, C1=0.01^2, C2=0.03^2) on valid
windows only; color images score as the mean of per-channel SSIM. Kernel
similarity is the maximum normalized cross-correlation over all cyclic
shifts, since blind deconvolution recovers kernels only up to translation.
"""

import numpy as np

from .errors import DimensionError, ValidationError
from .forward_model import as_image

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _check_pair(reference, estimate):
    reference = as_image(reference)
    estimate = as_image(estimate)
    if reference.shape != estimate.shape:
        raise DimensionError(
            f"shape mismatch: {reference.shape} vs {estimate.shape}"
        )
    return reference, estimate


def psnr(reference, estimate):
    """Peak signal-to-noise ratio in dB; identical inputs give inf."""
    reference, estimate = _check_pair(reference, estimate)
    mse = float(np.mean((reference - estimate) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _window_means(plane, window):
    # valid-mode correlation via accumulated shifted slices; plane is 2-D
    k = window.shape[0]
    oh = plane.shape[0] - k + 1
    ow = plane.shape[1] - k + 1
    out = np.zeros((oh, ow), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            out += window[i, j] * plane[i:i + oh, j:j + ow]
    return out


def ssim(reference, estimate):
    """Mean structural similarity over valid 11x11 windows, channels averaged."""
    reference, estimate = _check_pair(reference, estimate)
    h, w, c = reference.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValidationError(
            f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    window = gaussian_window()
    scores = []
    for ch in range(c):
        x = reference[:, :, ch]
        y = estimate[:, :, ch]
        mu_x = _window_means(x, window)
        mu_y = _window_means(y, window)
        xx = _window_means(x * x, window) - mu_x * mu_x
        yy = _window_means(y * y, window) - mu_y * mu_y
        xy = _window_means(x * y, window) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * xy + SSIM_C2)
        den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (xx + yy + SSIM_C2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def _embed(kernel, shape):
    out = np.zeros(shape, dtype=np.float64)
    out[: kernel.shape[0], : kernel.shape[1]] = kernel
    return out


def kernel_similarity(k_true, k_est):
    """Max normalized cross-correlation of two kernels over all cyclic shifts."""
    k_true = np.asarray(k_true, dtype=np.float64)
    k_est = np.asarray(k_est, dtype=np.float64)
    if k_true.ndim != 2 or k_est.ndim != 2:
        raise DimensionError("kernels must be 2-D")
    shape = (
        max(k_true.shape[0], k_est.shape[0]),
        max(k_true.shape[1], k_est.shape[1]),
    )
    a = _embed(k_true, shape)
    b = _embed(k_est, shape)
    na = float(np.sqrt(np.sum(a * a)))
    nb = float(np.sqrt(np.sum(b * b)))
    if na == 0.0 or nb == 0.0:
        return 0.0
    # circular cross-correlation of a with b over every 2-D shift at once
    corr = np.fft.irfft2(
        np.fft.rfft2(a) * np.conj(np.fft.rfft2(b)), s=shape
    )
    return float(np.max(corr) / (na * nb))
