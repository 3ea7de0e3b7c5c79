"""Synthetic image collections for desk-scale experiments."""

from __future__ import annotations

import numpy as np


def synthetic_images(n: int, size: int = 32, channels: int = 1, seed: int = 0) -> np.ndarray:
    """Smooth random scenes in [0, 1], shape ``[n, channels, size, size]``.

    Each image is a shaded background plane plus a few soft elliptical blobs,
    which gives the spatial redundancy a compressive autoencoder can exploit.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / (size - 1)
    out = np.empty((n, channels, size, size), dtype=np.float32)
    for i in range(n):
        for c in range(channels):
            gx, gy = rng.uniform(-0.3, 0.3, size=2)
            img = rng.uniform(0.3, 0.7) + gx * (xx - 0.5) + gy * (yy - 0.5)
            for _ in range(rng.integers(2, 5)):
                cx, cy = rng.uniform(0.1, 0.9, size=2)
                sx, sy = rng.uniform(0.08, 0.3, size=2)
                theta = rng.uniform(0, np.pi)
                dx, dy = xx - cx, yy - cy
                u = dx * np.cos(theta) + dy * np.sin(theta)
                v = -dx * np.sin(theta) + dy * np.cos(theta)
                img += rng.uniform(-0.5, 0.5) * np.exp(-0.5 * ((u / sx) ** 2 + (v / sy) ** 2))
            out[i, c] = np.clip(img, 0.0, 1.0)
    # land on the 8-bit grid so PGM/PPM round trips are exact
    return from_uint8(to_uint8(out))


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def from_uint8(img: np.ndarray) -> np.ndarray:
    return np.asarray(img, dtype=np.float32) / np.float32(255.0)
