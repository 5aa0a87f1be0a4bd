"""Integral-image box sums shared by cost construction and aggregation."""

from __future__ import annotations

import numpy as np


def integral_image(values: np.ndarray) -> np.ndarray:
    """Summed-area table with a zero first row/column, shape (H+1, W+1)."""
    h, w = values.shape
    table = np.zeros((h + 1, w + 1), dtype=np.float64)
    np.cumsum(values, axis=0, out=table[1:, 1:])
    np.cumsum(table[1:, 1:], axis=1, out=table[1:, 1:])
    return table


def box_sum_full(values: np.ndarray, radius: int) -> np.ndarray:
    """Sum over the (2r+1)^2 window at every pixel whose window fits entirely
    inside the image.  Border pixels (window would exit) are NaN."""
    h, w = values.shape
    side = 2 * radius + 1
    out = np.full((h, w), np.nan, dtype=np.float64)
    if side > h or side > w:
        return out
    table = integral_image(values)
    out[radius : h - radius, radius : w - radius] = (
        table[side:, side:] - table[:-side, side:] - table[side:, :-side] + table[:-side, :-side]
    )
    return out


def box_sum_clipped(values: np.ndarray, radius: int) -> np.ndarray:
    """Sum over the (2r+1)^2 window clipped to the image, at every pixel."""
    h, w = values.shape
    table = integral_image(values)
    ys = np.arange(h)
    xs = np.arange(w)
    y0 = np.clip(ys - radius, 0, h)[:, None]
    y1 = np.clip(ys + radius + 1, 0, h)[:, None]
    x0 = np.clip(xs - radius, 0, w)[None, :]
    x1 = np.clip(xs + radius + 1, 0, w)[None, :]
    return table[y1, x1] - table[y0, x1] - table[y1, x0] + table[y0, x0]
