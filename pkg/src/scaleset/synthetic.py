"""Synthetic test images: smooth gradients plus noise, quantised to integers."""

from __future__ import annotations

import numpy as np

from .raster import RasterImage


def smooth_noisy_image(rng: np.random.Generator, width: int = 64, height: int = 64,
                       noise: float = 4.0, step: int = 16, blobs: int = 3) -> RasterImage:
    """A random linear ramp with Gaussian bumps and additive noise.

    Values are quantised to multiples of ``step`` in 0..255, which leaves flat
    zones of useful size for the initial partition.
    """
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    gx, gy = rng.uniform(-2.0, 2.0, size=2)
    field = 128.0 + gx * (xx - width / 2) + gy * (yy - height / 2)
    for _ in range(blobs):
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        sigma = rng.uniform(0.1, 0.3) * max(width, height)
        amp = rng.uniform(-80.0, 80.0)
        field += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma ** 2))
    field += rng.normal(0.0, noise, size=field.shape)
    field = np.clip(np.round(field / step) * step, 0, 255)
    return RasterImage(field)


def random_small_image(rng: np.random.Generator, max_width: int = 5, max_height: int = 4,
                       levels: int = 8, channels: int = 1) -> RasterImage:
    """Tiny integer image with a few grey levels, so equal values and ties occur."""
    w = int(rng.integers(1, max_width + 1))
    h = int(rng.integers(1, max_height + 1))
    if w * h < 2:
        w = 2
    data = rng.integers(0, levels, size=(h, w, channels)) * (255 // max(1, levels - 1))
    return RasterImage(data.astype(np.float64))


def corpus(n: int = 20, seed: int = 0, width: int = 64, height: int = 64, **kw) -> list[RasterImage]:
    rng = np.random.default_rng(seed)
    return [smooth_noisy_image(rng, width, height, **kw) for _ in range(n)]
