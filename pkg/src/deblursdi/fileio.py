"""Image and kernel file formats.

Images are 8-bit grayscale or RGB PNGs, mapped linearly to [0, 1] on load
and rounded to nearest on save. Kernels use a plain-text format: first
line is the size K, followed by K rows of K whitespace-separated decimals.
"""

import numpy as np
from PIL import Image

from .errors import ValidationError
from .forward_model import validate_kernel


def load_image(path):
    with Image.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float64)[:, :, None]
        elif im.mode == "RGB":
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
        elif im.mode in ("1", "I", "I;16", "LA"):
            arr = np.asarray(im.convert("L"), dtype=np.float64)[:, :, None]
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_image(path, img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    if data.shape[2] == 1:
        Image.fromarray(data[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(data, mode="RGB").save(path)


def load_kernel(path):
    """Read a text kernel; renormalizes to unit sum, rejects real negatives."""
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    if not tokens:
        raise ValidationError(f"empty kernel file {path}")
    try:
        k = int(tokens[0])
        values = [float(t) for t in tokens[1:]]
    except ValueError as exc:
        raise ValidationError(f"malformed kernel file {path}: {exc}") from exc
    if k <= 0 or k % 2 == 0:
        raise ValidationError(f"kernel size must be odd and positive, got {k} in {path}")
    if len(values) != k * k:
        raise ValidationError(f"expected {k * k} kernel values in {path}, got {len(values)}")
    arr = np.array(values, dtype=np.float64).reshape(k, k)
    if arr.min() < -1e-9:
        raise ValidationError(f"kernel {path} has negative weights (min {arr.min():g})")
    arr = np.clip(arr, 0.0, None)
    total = arr.sum()
    if total <= 0:
        raise ValidationError(f"kernel {path} sums to zero")
    return arr / total


def save_kernel(path, kernel):
    kernel = validate_kernel(kernel)
    k = kernel.shape[0]
    lines = [str(k)]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in kernel]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def save_kernel_png(path, kernel, min_side=128):
    """Max-normalized, nearest-upscaled kernel visualization (display only)."""
    kernel = np.asarray(kernel, dtype=np.float64)
    peak = kernel.max()
    vis = kernel / peak if peak > 0 else kernel
    scale = max(1, int(np.ceil(min_side / kernel.shape[0])))
    vis = np.repeat(np.repeat(vis, scale, axis=0), scale, axis=1)
    Image.fromarray(np.rint(vis * 255.0).astype(np.uint8), mode="L").save(path)
