"""Grayscale conversion, thresholding and glyph normalisation."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

GLYPH_SIZE = 28
GLYPH_MARGIN = 2
MIN_INK = 10
MAX_BORDER_INK = 0.30


class BlankCellError(ValueError):
    pass


def to_grayscale(rgb) -> np.ndarray:
    """ITU-R 601 luma, rounded half up, as uint8."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim == 2:
        return rgb.astype(np.uint8)
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.floor(luma + 0.5).astype(np.uint8)


def otsu_threshold(gray) -> int:
    """Threshold t in 0..256 maximising between-class variance of {< t} vs {>= t}.

    Scores are compared exactly in integer arithmetic; ties go to the
    smallest t, so a constant image yields an empty foreground.
    """
    hist = np.bincount(np.asarray(gray, dtype=np.uint8).ravel(), minlength=256)
    counts = [int(c) for c in hist]
    total_n = sum(counts)
    total_s = sum(i * c for i, c in enumerate(counts))
    best_t, best_num, best_den = 0, 0, 1
    n0 = s0 = 0
    for t in range(1, 257):
        n0 += counts[t - 1]
        s0 += (t - 1) * counts[t - 1]
        n1, s1 = total_n - n0, total_s - s0
        if n0 == 0 or n1 == 0:
            continue
        # w0*w1*(mu1-mu0)^2 * N^2 == (n0*s1 - n1*s0)^2 / (n0*n1)
        num = (n0 * s1 - n1 * s0) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def binarize(gray, method: str = "otsu", threshold: int | None = None) -> np.ndarray:
    """Ink mask (uint8, 1 = ink) of pixels darker than the threshold."""
    gray = np.asarray(gray)
    if method == "otsu":
        t = otsu_threshold(gray)
    elif method == "fixed":
        if threshold is None:
            raise ValueError("fixed binarization needs a threshold")
        t = threshold
    else:
        raise ValueError(f"unknown method {method!r}")
    return (gray < t).astype(np.uint8)


def ink_bbox(cell):
    rows = np.flatnonzero(np.any(cell > 0, axis=1))
    cols = np.flatnonzero(np.any(cell > 0, axis=0))
    if rows.size == 0:
        return None
    return rows[0], rows[-1] + 1, cols[0], cols[-1] + 1


def normalize_cell(cell, size: int = GLYPH_SIZE, margin: int = GLYPH_MARGIN) -> np.ndarray:
    """Crop to the ink box, pad to a square, resample bilinearly to ``size``.

    The longer side of the ink box maps onto ``size - 2*margin`` output
    pixels. Downscaling is preceded by a Gaussian anti-alias filter. Any
    nonzero pixel counts as ink; output values lie in [0, 1].
    """
    cell = np.asarray(cell, dtype=np.float64)
    box = ink_bbox(cell)
    if box is None:
        raise BlankCellError("blank cell")
    r0, r1, c0, c1 = box
    glyph = cell[r0:r1, c0:c1]
    h, w = glyph.shape
    inner = size - 2 * margin
    scale = max(h, w) / inner  # input pixels per output pixel
    side = max(h, w) * size / inner
    padded_origin_r = (h - side) / 2.0
    padded_origin_c = (w - side) / 2.0
    if scale > 1.0:
        glyph = ndimage.gaussian_filter(glyph, sigma=(scale - 1.0) / 2.0, mode="constant")
    centers = (np.arange(size) + 0.5) * (side / size) - 0.5
    rr, cc = np.meshgrid(padded_origin_r + centers, padded_origin_c + centers, indexing="ij")
    out = ndimage.map_coordinates(glyph, [rr, cc], order=1, mode="constant", cval=0.0)
    return np.clip(out, 0.0, 1.0)


def is_noisy_cell(cell, min_ink: int = MIN_INK, max_border_fraction: float = MAX_BORDER_INK) -> bool:
    """Too little ink, or too much ink on the outermost pixel ring (rule-line bleed)."""
    ink = np.asarray(cell) > 0
    n = int(ink.sum())
    if n < min_ink:
        return True
    border = ink.copy()
    border[1:-1, 1:-1] = False
    return border.sum() / n > max_border_fraction
