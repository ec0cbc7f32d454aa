"""Stroke skeletons for the 50 glyph classes and a small stroke rasteriser.

Templates live in a unit box (x to the right, y downwards). A template is
a list of strokes (polylines, densely sampled) plus a list of dot centres
for diacritics. Letters that share a base shape differ only in their dots
or small marks, as in the script itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


def bez(*ctrl) -> np.ndarray:
    """Bezier curve of any degree through its control points."""
    pts = np.asarray(ctrl, dtype=np.float64)
    t = np.linspace(0.0, 1.0, 48)
    cur = np.repeat(pts[None], t.size, axis=0)  # (T, K, 2)
    tt = t[:, None, None]
    while cur.shape[1] > 1:
        cur = cur[:, :-1] * (1 - tt) + cur[:, 1:] * tt
    return cur[:, 0]


def seg(*pts) -> np.ndarray:
    return np.asarray(pts, dtype=np.float64)


def arc(cx, cy, rx, ry, a0=0.0, a1=360.0) -> np.ndarray:
    t = np.radians(np.linspace(a0, a1, 64))
    return np.stack([cx + rx * np.cos(t), cy - ry * np.sin(t)], axis=1)


def small_toe(x, y) -> list[np.ndarray]:
    """The small superscript mark distinguishing retroflex letters."""
    return [seg((x - 0.04, y - 0.10), (x - 0.04, y + 0.04)), arc(x + 0.01, y + 0.01, 0.06, 0.035)]


def dots_above(n, x, y) -> list[tuple[float, float]]:
    return {1: [(x, y)], 2: [(x - 0.08, y), (x + 0.08, y)],
            3: [(x - 0.08, y), (x + 0.08, y), (x, y - 0.1)]}[n]


def dots_below(n, x, y) -> list[tuple[float, float]]:
    return {1: [(x, y)], 2: [(x - 0.08, y), (x + 0.08, y)],
            3: [(x - 0.08, y), (x + 0.08, y), (x, y + 0.1)]}[n]


BEH = [bez((0.90, 0.30), (0.93, 0.64), (0.50, 0.68), (0.10, 0.64), (0.08, 0.42))]
HAH = [seg((0.20, 0.22), (0.66, 0.17)),
       bez((0.66, 0.17), (0.28, 0.30), (0.10, 0.60), (0.30, 0.95), (0.62, 0.98), (0.86, 0.84))]
DAL = [bez((0.35, 0.15), (0.58, 0.35), (0.70, 0.60)), bez((0.70, 0.60), (0.50, 0.67), (0.25, 0.62))]
REH = [bez((0.62, 0.30), (0.63, 0.66), (0.45, 0.86), (0.16, 0.90))]
SEEN = [seg((0.97, 0.30), (0.95, 0.46), (0.87, 0.46), (0.85, 0.33), (0.83, 0.46), (0.75, 0.46),
            (0.73, 0.33), (0.71, 0.46)),
        bez((0.71, 0.46), (0.70, 0.84), (0.18, 0.88), (0.05, 0.50))]
SAD = [bez((0.50, 0.48), (0.60, 0.18), (1.00, 0.24), (0.90, 0.48)), seg((0.90, 0.48), (0.50, 0.48)),
       bez((0.50, 0.48), (0.48, 0.84), (0.14, 0.86), (0.05, 0.50))]
TOE = [bez((0.30, 0.70), (0.45, 0.33), (0.92, 0.44), (0.86, 0.70)), seg((0.86, 0.70), (0.24, 0.70)),
       seg((0.40, 0.06), (0.40, 0.68))]
AIN = [bez((0.72, 0.15), (0.42, 0.04), (0.33, 0.40), (0.66, 0.40)),
       bez((0.66, 0.40), (0.22, 0.45), (0.12, 0.78), (0.45, 0.97), (0.86, 0.88))]
KAF = [seg((0.88, 0.16), (0.88, 0.62), (0.10, 0.64), (0.10, 0.48)), seg((0.87, 0.15), (0.46, 0.37))]
NOON = [arc(0.5, 0.45, 0.38, 0.36, 180, 360)]


def _templates():
    T = {}
    # digits 0-9
    T[0] = ([arc(0.5, 0.5, 0.07, 0.09)], [(0.5, 0.5)])
    T[1] = ([bez((0.45, 0.12), (0.53, 0.50), (0.50, 0.90)), seg((0.38, 0.17), (0.45, 0.12))], [])
    T[2] = ([bez((0.35, 0.15), (0.45, 0.38), (0.62, 0.30), (0.72, 0.10)),
             bez((0.40, 0.30), (0.42, 0.60), (0.48, 0.92))], [])
    T[3] = ([bez((0.28, 0.15), (0.36, 0.36), (0.47, 0.31), (0.50, 0.12)),
             bez((0.50, 0.12), (0.55, 0.34), (0.68, 0.30), (0.75, 0.10)),
             bez((0.33, 0.30), (0.37, 0.60), (0.45, 0.92))], [])
    T[4] = ([bez((0.72, 0.10), (0.32, 0.10), (0.34, 0.32), (0.62, 0.36)),
             bez((0.62, 0.36), (0.28, 0.40), (0.28, 0.62), (0.58, 0.66)),
             seg((0.58, 0.66), (0.52, 0.92))], [])
    T[5] = ([bez((0.5, 0.25), (0.30, 0.02), (0.06, 0.45), (0.5, 0.88)),
             bez((0.5, 0.25), (0.70, 0.02), (0.94, 0.45), (0.5, 0.88))], [])
    T[6] = ([bez((0.28, 0.20), (0.48, 0.06), (0.70, 0.20)),
             bez((0.70, 0.20), (0.55, 0.45), (0.45, 0.65), (0.40, 0.94))], [])
    T[7] = ([seg((0.22, 0.12), (0.50, 0.88), (0.78, 0.12))], [])
    T[8] = ([seg((0.22, 0.88), (0.50, 0.12), (0.78, 0.88))], [])
    T[9] = ([arc(0.45, 0.30, 0.16, 0.16), bez((0.61, 0.30), (0.60, 0.60), (0.55, 0.92))], [])
    # characters 10-49
    T[10] = ([seg((0.5, 0.08), (0.5, 0.92))], [])
    T[11] = ([seg((0.5, 0.26), (0.5, 0.92)), bez((0.28, 0.14), (0.40, 0.00), (0.58, 0.22), (0.72, 0.06))], [])
    T[12] = (BEH, dots_below(1, 0.5, 0.84))
    T[13] = (BEH, dots_below(3, 0.5, 0.82))
    T[14] = (BEH + small_toe(0.5, 0.14), [])
    T[15] = (BEH, dots_above(2, 0.5, 0.16))
    T[16] = (BEH, dots_above(3, 0.5, 0.18))
    T[17] = (HAH, [(0.52, 0.60)])
    T[18] = (HAH, [(0.44, 0.56), (0.60, 0.56), (0.52, 0.68)])
    T[19] = (HAH, [])
    T[20] = (HAH, [(0.42, 0.04)])
    T[21] = (DAL, [])
    T[22] = (DAL, [(0.36, 0.00)])
    T[23] = (DAL + small_toe(0.36, 0.00), [])
    T[24] = (REH, [])
    T[25] = (REH, [(0.62, 0.12)])
    T[26] = (REH, dots_above(3, 0.62, 0.14))
    T[27] = (REH + small_toe(0.62, 0.12), [])
    T[28] = (SEEN, [])
    T[29] = (SEEN, dots_above(3, 0.84, 0.16))
    T[30] = (SAD, [])
    T[31] = (SAD, [(0.74, 0.12)])
    T[32] = (TOE, [])
    T[33] = (TOE, [(0.64, 0.30)])
    T[34] = (AIN, [])
    T[35] = (AIN, [(0.55, 0.00)])
    T[36] = ([arc(0.80, 0.32, 0.09, 0.08), bez((0.86, 0.38), (0.82, 0.64), (0.45, 0.68), (0.10, 0.62), (0.08, 0.40))],
             [(0.80, 0.12)])
    T[37] = ([arc(0.72, 0.35, 0.10, 0.09), bez((0.80, 0.40), (0.86, 0.88), (0.34, 0.97), (0.14, 0.60))],
             dots_above(2, 0.72, 0.13))
    T[38] = (KAF, [])
    T[39] = (KAF + [seg((0.87, 0.03), (0.46, 0.25))], [])
    T[40] = ([bez((0.80, 0.05), (0.81, 0.60), (0.78, 0.97), (0.38, 0.96), (0.20, 0.70))], [])
    T[41] = ([arc(0.58, 0.35, 0.13, 0.12), bez((0.45, 0.38), (0.40, 0.66), (0.35, 0.95))], [])
    T[42] = (NOON, [(0.5, 0.40)])
    T[43] = (NOON, [])
    T[44] = ([arc(0.62, 0.30, 0.13, 0.13), bez((0.75, 0.32), (0.72, 0.74), (0.40, 0.90), (0.20, 0.88))], [])
    T[45] = ([arc(0.5, 0.56, 0.30, 0.32), arc(0.45, 0.64, 0.10, 0.10), seg((0.52, 0.24), (0.64, 0.12))], [])
    T[46] = ([arc(0.5, 0.62, 0.22, 0.22), bez((0.5, 0.40), (0.55, 0.25), (0.68, 0.15))], [])
    T[47] = ([bez((0.70, 0.25), (0.44, 0.08), (0.34, 0.42), (0.66, 0.45)), seg((0.66, 0.45), (0.30, 0.66))], [])
    T[48] = ([bez((0.65, 0.10), (0.24, 0.25), (0.55, 0.46), (0.86, 0.50)),
              bez((0.86, 0.50), (0.80, 0.86), (0.34, 0.93), (0.10, 0.70))], [])
    T[49] = ([bez((0.50, 0.15), (0.18, 0.36), (0.30, 0.55)), bez((0.30, 0.55), (0.60, 0.60), (0.96, 0.76))], [])
    return T


TEMPLATES = _templates()


@dataclass(frozen=True)
class Style:
    """Geometric and stroke parameters for rendering one glyph."""
    rotation_deg: float = 0.0
    scale_x: float = 1.0
    scale_y: float = 1.0
    half_width: float = 2.0  # stroke half-width in canvas pixels
    elastic_amp: float = 0.0
    elastic_phase: tuple = (0.0, 0.0, 0.0, 0.0)
    elastic_freq: tuple = (1.0, 1.0)
    stroke_jitter: float = 0.0  # independent offset of each stroke and dot, unit-box units
    jitter_seed: int = 0


def _transform(points: np.ndarray, style: Style) -> np.ndarray:
    p = points - 0.5
    if style.elastic_amp:
        fx, fy = style.elastic_freq
        a, b, c, d = style.elastic_phase
        x, y = p[:, 0], p[:, 1]
        dx = np.sin(2 * np.pi * fx * y + a) + np.sin(2 * np.pi * fy * x + b)
        dy = np.sin(2 * np.pi * fx * x + c) + np.sin(2 * np.pi * fy * y + d)
        p = p + 0.5 * style.elastic_amp * np.stack([dx, dy], axis=1)
    th = np.radians(style.rotation_deg)
    rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    return (p * [style.scale_x, style.scale_y]) @ rot.T


def _densify(poly: np.ndarray, spacing: float) -> np.ndarray:
    seglen = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seglen)])
    if s[-1] == 0:
        return poly[:1]
    t = np.linspace(0.0, s[-1], int(np.ceil(s[-1] / spacing)) + 1)
    return np.stack([np.interp(t, s, poly[:, 0]), np.interp(t, s, poly[:, 1])], axis=1)


def render(class_id: int, style: Style = Style(), canvas: int = 64) -> np.ndarray:
    """Anti-aliased ink image (1 = ink) of one glyph on a square canvas.

    The transformed glyph is fitted into the canvas with a fixed border, so
    stroke width is relative to glyph size.
    """
    strokes, dots = TEMPLATES[class_id]
    hw = style.half_width
    dot_r = 1.35 * hw + 0.8
    dots = np.asarray(dots, dtype=np.float64).reshape(-1, 2)
    if style.stroke_jitter:
        rng = np.random.default_rng(style.jitter_seed)
        shifts = rng.uniform(-style.stroke_jitter, style.stroke_jitter, (len(strokes) + len(dots), 2))
        strokes = [s + d for s, d in zip(strokes, shifts)]
        dots = dots + shifts[len(strokes):]
    moved = [_transform(s, style) for s in strokes]
    centers = _transform(dots, style)
    allpts = np.concatenate(moved + [centers])
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    border = dot_r + 3.0
    span = max(float((hi - lo).max()), 1e-6)
    k = (canvas - 2 * border) / span
    offset = (canvas - k * (hi - lo)) / 2.0 - k * lo

    seeds = np.zeros((canvas, canvas), dtype=bool)
    for s in moved:
        px = _densify(s * k + offset, 0.4)
        ij = np.clip(np.rint(px).astype(int), 0, canvas - 1)
        seeds[ij[:, 1], ij[:, 0]] = True
    if len(centers):
        yy, xx = np.mgrid[0:canvas, 0:canvas]
        inner = dot_r - hw
        for cx, cy in centers * k + offset:
            seeds |= (xx - cx) ** 2 + (yy - cy) ** 2 <= inner * inner
            seeds[int(np.clip(round(cy), 0, canvas - 1)), int(np.clip(round(cx), 0, canvas - 1))] = True
    dist = ndimage.distance_transform_edt(~seeds)
    return np.clip(hw + 0.5 - dist, 0.0, 1.0)
