"""Binary PGM (P5) and PPM (P6) reading and writing, 8-bit only."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class NetpbmError(ValueError):
    pass


def _tokens(data: bytes, count: int):
    """First ``count`` header tokens and the offset of the raster."""
    out, i = [], 0
    while len(out) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i < len(data) and data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < len(data) and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise NetpbmError("truncated header")
        out.append(data[start:i])
    # exactly one whitespace byte separates the header from the raster
    return out, i + 1


def read_netpbm(path) -> np.ndarray:
    """(H, W) uint8 for P5, (H, W, 3) uint8 for P6."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise NetpbmError(f"{path}: unsupported or bad magic {magic!r}")
    (_, w, h, maxval), offset = _tokens(data, 4)
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise NetpbmError(f"{path}: only maxval 255 is supported, got {maxval}")
    channels = 1 if magic == b"P5" else 3
    need = w * h * channels
    raster = data[offset:offset + need]
    if len(raster) < need:
        raise NetpbmError(f"{path}: truncated raster ({len(raster)} of {need} bytes)")
    arr = np.frombuffer(raster, dtype=np.uint8)
    return arr.reshape(h, w) if channels == 1 else arr.reshape(h, w, 3)


def write_netpbm(path, image) -> None:
    img = np.asarray(image)
    if img.dtype != np.uint8:
        raise NetpbmError("image must be uint8")
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise NetpbmError(f"unsupported image shape {img.shape}")
    h, w = img.shape[:2]
    Path(path).write_bytes(magic + f"\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes())
