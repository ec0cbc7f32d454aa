"""Form scans to a labelled dataset.

Each scan is one writer's filled form, named ``<writer_id>.pgm`` (or
``.ppm``). Scans are converted to gray, binarised with Otsu's threshold,
cut into 50 cells along the rule lines, screened for noise and normalised
to 28x28. Cell ``i`` holds class ``i``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import CLASS_NAMES, LabeledDataset
from .forms import GridDetectionError, segment_form
from .netpbm import NetpbmError, read_netpbm
from .preprocess import binarize, is_noisy_cell, normalize_cell, to_grayscale

log = logging.getLogger(__name__)

SCAN_SUFFIXES = (".pgm", ".ppm")
CELL_CROP = 3


class IngestError(RuntimeError):
    """One or more scans could not be processed."""

    def __init__(self, message: str, logs: list):
        super().__init__(message)
        self.logs = logs


@dataclass
class FormLog:
    path: str
    writer_id: int | None
    kept: list = field(default_factory=list)  # cell indices
    discarded: list = field(default_factory=list)  # (cell index, reason)
    error: str | None = None


@dataclass
class FormCells:
    log: FormLog
    images: list = field(default_factory=list)
    labels: list = field(default_factory=list)


def find_scans(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"{d}: not a directory")
    scans = [p for p in d.iterdir() if p.is_file() and p.suffix.lower() in SCAN_SUFFIXES]
    if not scans:
        raise FileNotFoundError(f"{d}: no forms found")
    return sorted(scans, key=lambda p: (not p.stem.isdigit(), int(p.stem) if p.stem.isdigit() else 0, p.name))


def process_form(path, crop: int = CELL_CROP) -> FormCells:
    path = Path(path)
    wid = int(path.stem) if path.stem.isdigit() else None
    out = FormCells(FormLog(str(path.name), wid))
    if wid is None:
        out.log.error = "file name is not a numeric writer id"
        return out
    try:
        img = read_netpbm(path)
        gray = to_grayscale(img) if img.ndim == 3 else img
        cells = segment_form(binarize(gray), crop=crop)
    except (OSError, NetpbmError, GridDetectionError) as exc:
        out.log.error = str(exc)
        return out
    for i, cell in enumerate(cells):
        if is_noisy_cell(cell):
            ink = int(np.count_nonzero(cell))
            out.log.discarded.append((i, "blank" if ink == 0 else f"noisy ({ink} ink px)"))
            continue
        out.images.append(normalize_cell(cell))
        out.labels.append(i)
        out.log.kept.append(i)
    return out


def ingest_directory(directory, workers: int = 1) -> tuple[LabeledDataset, list[FormLog]]:
    """All scans in ``directory`` in writer-id order.

    Raises IngestError (carrying every per-file log) if any scan fails.
    """
    scans = find_scans(directory)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(process_form, scans))
    logs = [r.log for r in results]
    failed = [lg for lg in logs if lg.error]
    if failed:
        raise IngestError(
            f"{len(failed)} of {len(logs)} scans failed: "
            + "; ".join(f"{lg.path}: {lg.error}" for lg in failed),
            logs,
        )
    seen = {}
    for lg in logs:
        if lg.writer_id in seen:
            raise IngestError(f"writer id {lg.writer_id} used by {seen[lg.writer_id]} and {lg.path}", logs)
        seen[lg.writer_id] = lg.path
    images = [im for r in results for im in r.images]
    labels = [lab for r in results for lab in r.labels]
    writers = [r.log.writer_id for r in results for _ in r.labels]
    if not images:
        raise IngestError("every cell was rejected", logs)
    ds = LabeledDataset(np.array(images), np.array(labels), np.array(writers), tuple(CLASS_NAMES))
    return ds, logs


def segmentation_log(logs) -> str:
    lines = []
    for lg in logs:
        if lg.error:
            lines.append(f"{lg.path}: FAILED {lg.error}")
            continue
        lines.append(f"{lg.path}: writer {lg.writer_id} kept {len(lg.kept)} discarded {len(lg.discarded)}")
        lines += [f"  cell {i}: {reason}" for i, reason in lg.discarded]
    return "\n".join(lines) + "\n"
