"""Deterministic synthetic writers.

Every writer gets a style drawn from its own random stream (a child of the
master seed), so a writer's samples do not depend on how many other
writers are generated or in which order. One sample per (writer, class).
"""

from __future__ import annotations

import numpy as np

from . import glyphs
from .dataset import NUM_CLASSES, LabeledDataset
from .forms import FormLayout, compose_form
from .preprocess import normalize_cell

MAX_ROTATION = 15.0
ELASTIC = (0.05, 0.12)
JITTER = (0.02, 0.06)


def writer_streams(seed: int, n_writers: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_writers)]


def draw_writer(rng: np.random.Generator) -> dict:
    return {
        "rotation": rng.uniform(-10.0, 10.0),
        "scale_x": rng.uniform(0.9, 1.1),
        "scale_y": rng.uniform(0.9, 1.1),
        "half_width": rng.uniform(1.6, 3.0),
        "elastic_amp": rng.uniform(ELASTIC[0], ELASTIC[1]),
        "stroke_jitter": rng.uniform(JITTER[0], JITTER[1]),
        "salt": rng.uniform(0.0, 0.01),
    }


def draw_style(writer: dict, rng: np.random.Generator) -> glyphs.Style:
    return glyphs.Style(
        rotation_deg=float(np.clip(writer["rotation"] + rng.uniform(-5.0, 5.0), -MAX_ROTATION, MAX_ROTATION)),
        scale_x=writer["scale_x"],
        scale_y=writer["scale_y"],
        half_width=writer["half_width"] * rng.uniform(0.9, 1.1),
        elastic_amp=writer["elastic_amp"],
        elastic_phase=tuple(rng.uniform(0.0, 2 * np.pi, 4)),
        elastic_freq=tuple(rng.uniform(0.5, 1.5, 2)),
        stroke_jitter=writer["stroke_jitter"],
        jitter_seed=int(rng.integers(2**63)),
    )


def salt(image, prob: float, rng: np.random.Generator) -> np.ndarray:
    mask = rng.random(image.shape) < prob
    values = rng.uniform(0.5, 1.0, image.shape)
    return np.where(mask, np.maximum(image, values), image)


def writer_samples(rng: np.random.Generator, classes) -> list[np.ndarray]:
    writer = draw_writer(rng)
    out = []
    for c in classes:
        canvas = glyphs.render(c, draw_style(writer, rng))
        out.append(salt(normalize_cell(canvas), writer["salt"], rng))
    return out


def synth_generate(n_writers: int, classes=None, seed: int = 0) -> LabeledDataset:
    """``n_writers * len(classes)`` samples, ordered by writer then class."""
    if n_writers < 1:
        raise ValueError("n_writers must be >= 1")
    classes = list(range(NUM_CLASSES)) if classes is None else sorted(set(int(c) for c in classes))
    if not classes:
        raise ValueError("class set is empty")
    if classes[0] < 0 or classes[-1] >= NUM_CLASSES:
        raise ValueError("class ids must lie in 0..49")
    images, labels, writers = [], [], []
    for wid, rng in enumerate(writer_streams(seed, n_writers)):
        images += writer_samples(rng, classes)
        labels += classes
        writers += [wid] * len(classes)
    return LabeledDataset(np.array(images), np.array(labels), np.array(writers))


def synth_form(rng: np.random.Generator, layout: FormLayout = FormLayout()) -> np.ndarray:
    """A filled 50-cell form for one writer as an 8-bit scan (0 = ink, 255 = paper)."""
    writer = draw_writer(rng)
    size = layout.cell_size
    inner = size - 16  # keep glyphs clear of the rule lines
    cells = []
    for c in range(NUM_CLASSES):
        g = glyphs.render(c, draw_style(writer, rng), canvas=inner) > 0.5
        cell = np.zeros((size, size), dtype=np.uint8)
        cell[8:8 + inner, 8:8 + inner] = g
        cells.append(cell)
    form = compose_form(cells, layout)
    paper = rng.integers(225, 256, form.shape)
    ink = rng.integers(0, 40, form.shape)
    return np.where(form > 0, ink, paper).astype(np.uint8)
