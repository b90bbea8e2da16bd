"""Deterministic synthetic test scenes and blur kernels.

These fixtures back the small-scale benchmarks: a structured grayscale
scene with edges at several orientations plus smooth regions, and a
two-segment motion kernel rasterized from a polyline. Both are pure
functions of their arguments, no RNG involved.
"""

import numpy as np

from .errors import ValidationError


def benchmark_image(size=64):
    """Structured grayscale scene in [0.05, 0.95], shape (size, size, 1)."""
    if size < 16:
        raise ValidationError(f"benchmark image size must be >= 16, got {size}")
    s = float(size)
    ii, jj = np.mgrid[0:size, 0:size].astype(np.float64)
    img = 0.25 + 0.35 * (jj / (s - 1))  # horizontal ramp background

    # bright disk, upper left
    disk = (ii - 0.30 * s) ** 2 + (jj - 0.28 * s) ** 2 <= (0.16 * s) ** 2
    img[disk] = 0.90

    # dark rectangle, lower right
    r0, r1 = int(0.58 * s), int(0.86 * s)
    c0, c1 = int(0.55 * s), int(0.92 * s)
    img[r0:r1, c0:c1] = 0.10

    # diagonal stripes, lower left
    band = (ii > 0.55 * s) & (jj < 0.45 * s)
    stripes = 0.5 + 0.4 * np.sign(np.sin((ii + 2.0 * jj) * (np.pi / 6.0)))
    img[band] = stripes[band]

    # thin bright horizontal and vertical lines crossing the upper right
    lr = int(0.22 * s)
    lc = int(0.72 * s)
    img[lr, int(0.55 * s):] = 0.95
    img[: int(0.45 * s), lc] = 0.95

    return np.clip(img, 0.05, 0.95)[:, :, None]


def _splat_points(size, pts):
    grid = np.zeros((size, size), dtype=np.float64)
    for r, c in pts:
        r0 = int(np.floor(r))
        c0 = int(np.floor(c))
        fr = r - r0
        fc = c - c0
        for dr, wr in ((0, 1.0 - fr), (1, fr)):
            for dc, wc in ((0, 1.0 - fc), (1, fc)):
                rr, cc = r0 + dr, c0 + dc
                if 0 <= rr < size and 0 <= cc < size:
                    grid[rr, cc] += wr * wc
    return grid


def _polyline_points(vertices, samples_per_px=64):
    # constant-speed sampling: point count proportional to segment length
    chunks = []
    for p, q in zip(vertices[:-1], vertices[1:]):
        n = max(2, int(np.ceil(np.linalg.norm(q - p) * samples_per_px)))
        ts = np.linspace(0.0, 1.0, n)
        chunks.append(p[None, :] + ts[:, None] * (q - p)[None, :])
    return np.concatenate(chunks)


def two_segment_motion_kernel(size=9):
    """Motion blur along a bent two-segment path, normalized to sum 1.

    The splatted mass centroid is pulled onto the exact grid center so the
    kernel carries no built-in translation. Plain (unshifted) PSNR is then
    a fair score for images recovered jointly with this kernel, since
    blind deconvolution fixes absolute position only through the kernel.
    """
    if size < 5 or size % 2 == 0:
        raise ValidationError(f"kernel size must be odd and >= 5, got {size}")
    c = (size - 1) / 2.0
    ext = 0.38 * (size - 1)
    vertices = [
        np.array([-ext, -0.55 * ext]),
        np.array([0.55 * ext, -0.35 * ext]),
        np.array([0.70 * ext, ext]),
    ]
    pts = _polyline_points(vertices) + c
    grid = np.mgrid[0:size, 0:size]
    for _ in range(3):
        k = _splat_points(size, pts)
        k /= k.sum()
        centroid = np.array([(grid[0] * k).sum(), (grid[1] * k).sum()])
        pts -= centroid - c
    return k


def gaussian_kernel(size=9, sigma=1.2):
    """Isotropic Gaussian kernel on a size x size grid, normalized."""
    if size < 3 or size % 2 == 0:
        raise ValidationError(f"kernel size must be odd and >= 3, got {size}")
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def delta_kernel(size=9):
    """Identity kernel: all mass at the center tap."""
    if size % 2 == 0:
        raise ValidationError(f"kernel size must be odd, got {size}")
    k = np.zeros((size, size), dtype=np.float64)
    k[size // 2, size // 2] = 1.0
    return k
