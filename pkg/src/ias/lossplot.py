"""Tiny PPM plotter for fit loss histories.

No plotting stack, no fonts: just polylines on a white canvas, written out as
the same binary PPM the renderer uses.  Sign loss draws in blue, normal loss
in orange, total in black; the vertical axis is log10 of the loss.
"""

from __future__ import annotations

import numpy as np

from .render import write_ppm

SERIES_COLORS = (
    (70, 110, 180),   # sign loss
    (220, 140, 40),   # normal loss
    (20, 20, 20),     # total
)
MARGIN = 10
FLOOR = 1e-12


def _draw_line(img: np.ndarray, x0: int, y0: int, x1: int, y1: int, color) -> None:
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    h, w, _ = img.shape
    while True:
        if 0 <= y0 < h and 0 <= x0 < w:
            img[y0, x0] = color
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def loss_curve_image(history: np.ndarray, width: int = 640, height: int = 360) -> np.ndarray:
    """(H, W, 3) uint8 plot of (step, sign, normal, total) history rows."""
    hist = np.atleast_2d(np.asarray(history, dtype=np.float64))
    if hist.shape[1] != 4 or len(hist) == 0:
        raise ValueError("history must be (K, 4): step, sign, normal, total")
    img = np.full((height, width, 3), 255, dtype=np.uint8)

    steps = hist[:, 0]
    logs = np.log10(np.maximum(hist[:, 1:4], FLOOR))
    x_lo, x_hi = float(steps[0]), float(steps[-1])
    y_lo, y_hi = float(logs.min()), float(logs.max())
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0

    def px(step: float) -> int:
        return MARGIN + int(round((step - x_lo) / (x_hi - x_lo) * (width - 1 - 2 * MARGIN)))

    def py(val: float) -> int:
        return height - 1 - MARGIN - int(round((val - y_lo) / (y_hi - y_lo)
                                               * (height - 1 - 2 * MARGIN)))

    frame = (180, 180, 180)
    _draw_line(img, MARGIN, height - 1 - MARGIN, width - 1 - MARGIN, height - 1 - MARGIN, frame)
    _draw_line(img, MARGIN, MARGIN, MARGIN, height - 1 - MARGIN, frame)
    # decade ticks on the log axis
    for dec in range(int(np.ceil(y_lo)), int(np.floor(y_hi)) + 1):
        yy = py(float(dec))
        _draw_line(img, MARGIN, yy, MARGIN + 4, yy, frame)

    for col, color in zip(range(3), SERIES_COLORS):
        xs = [px(s) for s in steps]
        ys = [py(v) for v in logs[:, col]]
        if len(xs) == 1:
            _draw_line(img, xs[0], ys[0], xs[0], ys[0], color)
            continue
        for k in range(len(xs) - 1):
            _draw_line(img, xs[k], ys[k], xs[k + 1], ys[k + 1], color)
    return img


def write_loss_curve(history: np.ndarray, path: str,
                     width: int = 640, height: int = 360) -> None:
    write_ppm(loss_curve_image(history, width, height), path)
