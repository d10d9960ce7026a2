"""On-disk formats: SRT1 tensors and binary PGM/PPM images.

SRT1 layout (all integers little-endian u32)::

    b"SUBDRND1" | dtype (1=f32, 2=f64) | C | H | W | C*H*W values

Values are channel-major, row-major, little-endian.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .grid import FeatureMap, ProbGrid

MAGIC = b"SUBDRND1"
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODES = {"f32": 1, "f64": 2}


class FormatError(ValueError):
    pass


def write_tensor(fh: BinaryIO, values: np.ndarray, dtype: str = "f64") -> None:
    arr = np.asarray(values)
    if arr.ndim != 3:
        raise ValueError("SRT1 tensors are 3-D (C, H, W)")
    code = _CODES[dtype]
    fh.write(MAGIC)
    fh.write(struct.pack("<4I", code, *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())


def read_tensor(fh: BinaryIO) -> np.ndarray:
    magic = fh.read(8)
    if magic != MAGIC:
        raise FormatError(f"bad SRT1 magic {magic!r}")
    header = fh.read(16)
    if len(header) != 16:
        raise FormatError("truncated SRT1 header")
    code, c, h, w = struct.unpack("<4I", header)
    if code not in _DTYPES:
        raise FormatError(f"unknown SRT1 dtype code {code}")
    dt = _DTYPES[code]
    count = c * h * w
    raw = fh.read(count * dt.itemsize)
    if len(raw) != count * dt.itemsize:
        raise FormatError("truncated SRT1 payload")
    return np.frombuffer(raw, dtype=dt).astype(np.float64).reshape(c, h, w)


def save_feature_map(path, fmap: FeatureMap, dtype: str = "f64") -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, fmap.values, dtype)


def load_feature_map(path) -> FeatureMap:
    with open(path, "rb") as fh:
        return FeatureMap(read_tensor(fh))


def save_feature_maps(path, fmaps, dtype: str = "f64") -> None:
    """Several maps back to back in one file."""
    with open(path, "wb") as fh:
        for fm in fmaps:
            write_tensor(fh, fm.values, dtype)


def load_feature_maps(path) -> list[FeatureMap]:
    data = Path(path).read_bytes()
    maps = []
    fh = io.BytesIO(data)
    while fh.tell() < len(data):
        maps.append(FeatureMap(read_tensor(fh)))
    return maps


def save_prob_grid(path, grid: ProbGrid, dtype: str = "f64") -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, grid.values, dtype)


def load_prob_grid(path) -> ProbGrid:
    with open(path, "rb") as fh:
        return ProbGrid.from_unnormalized(read_tensor(fh))


def write_pgm(path, image: np.ndarray) -> None:
    """8-bit binary PGM (P5). ``image`` is 2-D; bool masks map to 0/255."""
    img = np.asarray(image)
    if img.dtype == bool:
        img = img.astype(np.uint8) * 255
    elif img.dtype != np.uint8:
        img = np.clip(np.round(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(img).tobytes())


def write_ppm(path, rgb: np.ndarray) -> None:
    """8-bit binary PPM (P6) from an ``(H, W, 3)`` uint8 array."""
    img = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_pnm(path) -> np.ndarray:
    """Read P5/P6 files written by this module (no comments, maxval 255)."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    kind, w, h, maxval = parts[0], int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise FormatError("only 8-bit PNM is supported")
    header_len = len(b"%s\n%d %d\n255\n" % (kind, w, h))
    body = np.frombuffer(data[header_len:], dtype=np.uint8)
    if kind == b"P5":
        return body.reshape(h, w)
    if kind == b"P6":
        return body.reshape(h, w, 3)
    raise FormatError(f"unsupported PNM kind {kind!r}")
