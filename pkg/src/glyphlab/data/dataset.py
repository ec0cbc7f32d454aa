"""Labelled 28x28 glyph datasets, class list, tasks and writer-disjoint splits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DIGITS = ["۰", "۱", "۲", "۳", "۴", "۵", "۶", "۷", "۸", "۹"]

# (romanised name, glyph) in alphabet order
CHARACTERS = [
    ("Alif", "ا"), ("Mad", "آ"), ("Baa", "ب"), ("Paa", "پ"), ("Taa", "ٹ"),
    ("Tey", "ت"), ("Seey", "ث"), ("Jeem", "ج"), ("Cheey", "چ"), ("Haa", "ح"),
    ("Khaa", "خ"), ("Daal", "د"), ("Zaal", "ذ"), ("Dhal", "ڈ"), ("Raa", "ر"),
    ("Zaa", "ز"), ("Zaa 2", "ژ"), ("Rhaa", "ڑ"), ("Seen", "س"), ("Sheen", "ش"),
    ("Swad", "ص"), ("Zwad", "ض"), ("Twa", "ط"), ("Zwaa", "ظ"), ("Ayn", "ع"),
    ("Ghain", "غ"), ("Faa", "ف"), ("Qaaf", "ق"), ("Kaaf", "ک"), ("Gaaf", "گ"),
    ("Laam", "ل"), ("Meem", "م"), ("Noon", "ن"), ("Gunna", "ں"), ("Wow", "و"),
    ("Haaw", "ھ"), ("Haaw 2", "ہ"), ("Hamza", "ء"), ("Choti", "ی"), ("Bari", "ے"),
]

CLASS_NAMES = DIGITS + [glyph for _, glyph in CHARACTERS]
ROMAN_NAMES = [str(i) for i in range(10)] + [name for name, _ in CHARACTERS]
NUM_CLASSES = len(CLASS_NAMES)

TASKS = {
    "digits": list(range(0, 10)),
    "characters": list(range(10, 50)),
    "combined": list(range(0, 50)),
}


@dataclass
class LabeledDataset:
    images: np.ndarray  # (N, 28, 28) float64 in [0, 1], ink = 1
    labels: np.ndarray  # (N,) int64, global class ids
    writer_ids: np.ndarray  # (N,) int64
    class_names: tuple = tuple(CLASS_NAMES)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64).reshape(-1, 28, 28)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.writer_ids = np.asarray(self.writer_ids, dtype=np.int64).reshape(-1)
        n = len(self.images)
        if len(self.labels) != n or len(self.writer_ids) != n:
            raise ValueError("images, labels and writer_ids must have equal length")
        if n and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ValueError("label out of range")
        if n and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, mask) -> "LabeledDataset":
        return LabeledDataset(self.images[mask], self.labels[mask], self.writer_ids[mask], self.class_names)

    def for_task(self, task: str) -> "LabeledDataset":
        return self.subset(np.isin(self.labels, TASKS[task]))

    @property
    def writers(self) -> np.ndarray:
        return np.unique(self.writer_ids)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.85
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


def train_writer_count(n_writers: int, fraction: float) -> int:
    """round(fraction * n) clamped to [1, n-1]; Python rounding, so exact halves go to even."""
    return min(max(int(round(fraction * n_writers)), 1), n_writers - 1)


def split_subject_independent(ds: LabeledDataset, spec: SplitSpec = SplitSpec()):
    """Partition by writer so no writer appears in both halves."""
    writers = ds.writers
    if len(writers) < 2:
        raise ValueError("need at least two distinct writers to split")
    order = np.random.default_rng(spec.seed).permutation(writers)
    train_writers = order[: train_writer_count(len(writers), spec.train_fraction)]
    mask = np.isin(ds.writer_ids, train_writers)
    return ds.subset(mask), ds.subset(~mask)
