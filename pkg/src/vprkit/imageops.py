"""Resampling primitives: area-average resize and bilinear warping."""

from __future__ import annotations

import numpy as np


def _overlap_weights(src: int, dst: int) -> np.ndarray:
    """(dst, src) matrix of interval-overlap weights for 1-D area averaging.

    Row i holds the fraction of destination cell i covered by each source
    cell; rows sum to 1 for any src/dst pair.
    """
    w = np.zeros((dst, src))
    scale = src / dst
    for i in range(dst):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, src)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / scale


def resize_area(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resize (H, W, C) or (H, W) by exact area averaging."""
    wy = _overlap_weights(img.shape[0], height)
    wx = _overlap_weights(img.shape[1], width)
    flat = np.atleast_3d(img)
    out = np.tensordot(wy, flat, axes=(1, 0))  # (height, W, C)
    out = np.tensordot(out, wx, axes=(1, 1)).transpose(0, 2, 1)  # (height, width, C)
    return out.reshape(height, width, *img.shape[2:])


def sample_bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample (H, W, C) at fractional coordinates with edge clamping.

    ys/xs are arrays of the same shape; the result has that shape plus
    the channel axis.
    """
    h, w = img.shape[:2]
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[..., None]
    fx = (xs - x0)[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy
