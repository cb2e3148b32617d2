"""Seeded procedural gel texture and exact homography rendering."""
from __future__ import annotations

import cv2
import numpy as np
from scipy import ndimage

FRAME_WIDTH = 320
FRAME_HEIGHT = 240
TEXTURE_PAD = 48


def procedural_texture(seed: int, width: int = FRAME_WIDTH, height: int = FRAME_HEIGHT,
                       sigma: float = 3.0, pad: int = TEXTURE_PAD) -> np.ndarray:
    """Smoothed white noise on a canvas padded by ``pad`` pixels on every side, scaled to [0, 1]."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((height + 2 * pad, width + 2 * pad))
    tex = ndimage.gaussian_filter(noise, sigma, mode="wrap")
    lo, hi = np.percentile(tex, [0.5, 99.5])
    tex = np.clip((tex - lo) / (hi - lo), 0.0, 1.0)
    return tex.astype(np.float32)


def render_homography(texture: np.ndarray, H: np.ndarray, width: int = FRAME_WIDTH,
                      height: int = FRAME_HEIGHT, pad: int = TEXTURE_PAD) -> np.ndarray:
    """Frame whose pixel ``x`` shows the texture at ``H^-1 x`` (frame coordinates).

    ``H`` maps reference-frame pixels to current-frame pixels, so content
    at reference location ``p`` appears at ``H p``.
    """
    shift = np.array([[1.0, 0.0, pad], [0.0, 1.0, pad], [0.0, 0.0, 1.0]])
    M = (shift @ np.linalg.inv(H)).astype(np.float32)
    u, v = _pixel_grid(width, height)
    den = M[2, 0] * u + M[2, 1] * v + M[2, 2]
    mx = (M[0, 0] * u + M[0, 1] * v + M[0, 2]) / den
    my = (M[1, 0] * u + M[1, 1] * v + M[1, 2]) / den
    # remap with float maps interpolates exactly; warpPerspective quantizes to 1/32 px
    return cv2.remap(texture, mx, my, cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT)


_GRIDS: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _pixel_grid(width: int, height: int):
    if (width, height) not in _GRIDS:
        u, v = np.meshgrid(np.arange(width, dtype=np.float32),
                           np.arange(height, dtype=np.float32))
        _GRIDS[(width, height)] = (u, v)
    return _GRIDS[(width, height)]


def render_reference(texture: np.ndarray, width: int = FRAME_WIDTH, height: int = FRAME_HEIGHT,
                     pad: int = TEXTURE_PAD) -> np.ndarray:
    return np.ascontiguousarray(texture[pad:pad + height, pad:pad + width])
