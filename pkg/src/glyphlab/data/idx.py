"""Dataset persistence: IDX image/label files plus a CSV manifest.

Files written into a dataset directory:

    images-idx3-ubyte   magic 0x00000803, big-endian count,28,28, then bytes round(255*v)
    labels-idx1-ubyte   magic 0x00000801, big-endian count, then one byte per label
    manifest.csv        index,writer_id,label,class_name (UTF-8, LF)
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .dataset import CLASS_NAMES, LabeledDataset

IMAGES_FILE = "images-idx3-ubyte"
LABELS_FILE = "labels-idx1-ubyte"
MANIFEST_FILE = "manifest.csv"
IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class DatasetFormatError(ValueError):
    pass


class BadMagicError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class DimensionMismatchError(DatasetFormatError):
    pass


def encode_images(images) -> bytes:
    images = np.asarray(images, dtype=np.float64)
    n = images.shape[0]
    header = struct.pack(">IIII", IMAGE_MAGIC, n, 28, 28)
    return header + np.floor(255.0 * images + 0.5).astype(np.uint8).tobytes()


def encode_labels(labels) -> bytes:
    labels = np.asarray(labels, dtype=np.int64)
    return struct.pack(">II", LABEL_MAGIC, labels.size) + labels.astype(np.uint8).tobytes()


def decode_images(data: bytes) -> np.ndarray:
    if len(data) < 4:
        raise TruncatedFileError("truncated image header")
    if struct.unpack(">I", data[:4])[0] != IMAGE_MAGIC:
        raise BadMagicError("bad magic in image file")
    if len(data) < 16:
        raise TruncatedFileError("truncated image header")
    n, rows, cols = struct.unpack(">III", data[4:16])
    if (rows, cols) != (28, 28):
        raise DimensionMismatchError(f"images are {rows}x{cols}, expected 28x28")
    need = 16 + n * rows * cols
    if len(data) < need:
        raise TruncatedFileError(f"image file truncated: {len(data)} of {need} bytes")
    if len(data) > need:
        raise DimensionMismatchError(f"image file has {len(data) - need} trailing bytes")
    return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(n, rows, cols) / 255.0


def decode_labels(data: bytes) -> np.ndarray:
    if len(data) < 4:
        raise TruncatedFileError("truncated label header")
    if struct.unpack(">I", data[:4])[0] != LABEL_MAGIC:
        raise BadMagicError("bad magic in label file")
    if len(data) < 8:
        raise TruncatedFileError("truncated label header")
    (n,) = struct.unpack(">I", data[4:8])
    if len(data) < 8 + n:
        raise TruncatedFileError(f"label file truncated: {len(data)} of {8 + n} bytes")
    if len(data) > 8 + n:
        raise DimensionMismatchError(f"label file has {len(data) - 8 - n} trailing bytes")
    return np.frombuffer(data, dtype=np.uint8, offset=8).astype(np.int64)


def manifest_text(ds: LabeledDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "writer_id", "label", "class_name"])
    for i, (wid, lab) in enumerate(zip(ds.writer_ids, ds.labels)):
        w.writerow([i, int(wid), int(lab), ds.class_names[lab]])
    return buf.getvalue()


def store_dataset(ds: LabeledDataset, directory) -> list[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / IMAGES_FILE, out / LABELS_FILE, out / MANIFEST_FILE]
    paths[0].write_bytes(encode_images(ds.images))
    paths[1].write_bytes(encode_labels(ds.labels))
    paths[2].write_text(manifest_text(ds), encoding="utf-8", newline="\n")
    return paths


def load_dataset(directory) -> LabeledDataset:
    d = Path(directory)
    missing = [name for name in (IMAGES_FILE, LABELS_FILE, MANIFEST_FILE) if not (d / name).is_file()]
    if missing:
        raise FileNotFoundError(f"{d}: missing dataset files {missing}")
    images = decode_images((d / IMAGES_FILE).read_bytes())
    labels = decode_labels((d / LABELS_FILE).read_bytes())
    if len(images) != len(labels):
        raise DimensionMismatchError(f"{len(images)} images but {len(labels)} labels")
    with open(d / MANIFEST_FILE, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != len(labels):
        raise DimensionMismatchError(f"manifest has {len(rows)} rows for {len(labels)} samples")
    writer_ids = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        if int(row["index"]) != i or int(row["label"]) != labels[i]:
            raise DimensionMismatchError(f"manifest row {i} disagrees with the label file")
        if row["class_name"] != CLASS_NAMES[labels[i]]:
            raise DimensionMismatchError(f"manifest row {i}: unexpected class name {row['class_name']!r}")
        writer_ids[i] = int(row["writer_id"])
    return LabeledDataset(images, labels, writer_ids)
