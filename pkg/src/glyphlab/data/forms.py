"""Ruled 5x10 collection forms: composition and segmentation.

Cell order follows the form layout: rows top to bottom, and within a row
right to left, so cell 0 (the digit zero) is the top-right cell. Cell
``i`` carries canonical class ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROWS, COLS = 5, 10


class GridDetectionError(ValueError):
    pass


@dataclass(frozen=True)
class FormLayout:
    cell_size: int = 64
    line_width: int = 2
    page_margin: int = 20

    def line_starts(self, n: int) -> list[int]:
        step = self.cell_size + self.line_width
        return [self.page_margin + k * step for k in range(n + 1)]

    def shape(self) -> tuple[int, int]:
        step = self.cell_size + self.line_width
        return (2 * self.page_margin + ROWS * step + self.line_width,
                2 * self.page_margin + COLS * step + self.line_width)


def cell_position(index: int) -> tuple[int, int]:
    """(row, column) of cell ``index``, columns counted from the left."""
    return index // COLS, COLS - 1 - index % COLS


def compose_form(cells, layout: FormLayout = FormLayout()) -> np.ndarray:
    """Ink mask (1 = ink) of a ruled form holding 50 cell images.

    Each cell must be ``cell_size`` square; nonzero pixels become ink.
    """
    if len(cells) != ROWS * COLS:
        raise ValueError(f"need {ROWS * COLS} cells, got {len(cells)}")
    form = np.zeros(layout.shape(), dtype=np.uint8)
    ys, xs = layout.line_starts(ROWS), layout.line_starts(COLS)
    lw, cs = layout.line_width, layout.cell_size
    x_end, y_end = xs[-1] + lw, ys[-1] + lw
    for y in ys:
        form[y:y + lw, xs[0]:x_end] = 1
    for x in xs:
        form[ys[0]:y_end, x:x + lw] = 1
    for i, cell in enumerate(cells):
        cell = np.asarray(cell)
        if cell.shape != (cs, cs):
            raise ValueError(f"cell {i} has shape {cell.shape}, expected {(cs, cs)}")
        r, c = cell_position(i)
        y0, x0 = ys[r] + lw, xs[c] + lw
        form[y0:y0 + cs, x0:x0 + cs] = cell > 0
    return form


def _runs(mask) -> list[tuple[int, int]]:
    """[start, end) spans of consecutive True entries."""
    m = np.concatenate([[False], np.asarray(mask, dtype=bool), [False]])
    d = np.diff(m.astype(np.int8))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def find_rule_lines(form, axis: int, min_fraction: float = 0.5) -> list[tuple[int, int]]:
    """Spans of rows (axis=0) or columns (axis=1) whose ink density is a rule line.

    A row/column counts when its ink count reaches ``min_fraction`` of the
    densest one; the table lines dominate the projection profile.
    """
    profile = np.asarray(form, dtype=bool).sum(axis=1 - axis)
    peak = profile.max() if profile.size else 0
    if peak == 0:
        return []
    return _runs(profile >= min_fraction * peak)


def segment_form(form, crop: int = 2, rows: int = ROWS, cols: int = COLS) -> list[np.ndarray]:
    """Cut a binarised form into ``rows*cols`` cells in canonical order.

    Grid lines come from projection-profile peaks; ``crop`` pixels are then
    trimmed from every side of each cell interior to drop rule-line bleed.
    A form with no ink-dense rows or columns is treated as borderless and
    divided uniformly. Any other line count raises GridDetectionError.
    """
    form = np.asarray(form, dtype=np.uint8)
    h_lines = find_rule_lines(form, 0)
    v_lines = find_rule_lines(form, 1)
    if _looks_borderless(form, h_lines, v_lines):
        ys = np.linspace(0, form.shape[0], rows + 1).round().astype(int)
        xs = np.linspace(0, form.shape[1], cols + 1).round().astype(int)
        h_lines = [(y, y) for y in ys]
        v_lines = [(x, x) for x in xs]
    elif len(h_lines) != rows + 1 or len(v_lines) != cols + 1:
        raise GridDetectionError(
            f"expected {rows + 1} horizontal / {cols + 1} vertical rule lines, found "
            f"{len(h_lines)} at rows {[int(a) for a, _ in h_lines]} / "
            f"{len(v_lines)} at columns {[int(a) for a, _ in v_lines]}"
        )
    cells = []
    for i in range(rows * cols):
        r = i // cols
        c = cols - 1 - i % cols
        y0, y1 = h_lines[r][1] + crop, h_lines[r + 1][0] - crop
        x0, x1 = v_lines[c][1] + crop, v_lines[c + 1][0] - crop
        if y1 <= y0 or x1 <= x0:
            raise GridDetectionError(f"cell {i} collapses after cropping {crop} px")
        cells.append(form[y0:y1, x0:x1].copy())
    return cells


def _looks_borderless(form, h_lines, v_lines) -> bool:
    # a real rule line spans most of the table; strokes inside single cells cannot
    if not h_lines or not v_lines:
        return True
    ink = np.asarray(form, dtype=bool)
    longest_row = ink.sum(axis=1).max()
    longest_col = ink.sum(axis=0).max()
    return longest_row < 0.5 * form.shape[1] and longest_col < 0.5 * form.shape[0]
