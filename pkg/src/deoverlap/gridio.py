"""Lossless-enough persistence for grids and images.

Probability grids travel as 16-bit grayscale PNGs (``value / 65535``), which
keeps them inspectable and reproducible to one part in 65535; hard 0/1
values survive exactly.  Feature grids use a flat binary format: a header of
``width, height, channels`` as little-endian 32-bit integers followed by
32-bit floats, row-major within each channel, channels outermost.

All writers go through a temp-file + atomic-rename, so a failed run never
leaves a partial file behind.
"""

from __future__ import annotations

import io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import CorruptDataError, InvalidInputError
from .validation import check_feature_grid, check_prob_grid

_FEATURE_HEADER = struct.Struct("<iii")  # width, height, channels


def atomic_write_bytes(path, data: bytes) -> None:
    """Write bytes to ``path`` via a same-directory temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _png_bytes(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def write_prob_png(grid: np.ndarray, path) -> None:
    """Store a probability grid as a 16-bit grayscale PNG."""
    grid = check_prob_grid(grid)
    scaled = np.floor(grid * 65535.0 + 0.5).astype(np.uint16)
    atomic_write_bytes(path, _png_bytes(Image.fromarray(scaled)))


def read_prob_png(path) -> np.ndarray:
    """Load a probability grid written by :func:`write_prob_png`."""
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim != 2:
        raise CorruptDataError(f"{path}: expected a single-channel grayscale PNG")
    if arr.dtype == np.uint8:  # tolerate 8-bit grids
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.float64) / 65535.0


def write_image_png(image: np.ndarray, path) -> None:
    """Store an RGB image as a plain 8-bit PNG (header + data chunks only)."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise InvalidInputError("image must be a (height, width, 3) uint8 array")
    atomic_write_bytes(path, _png_bytes(Image.fromarray(image, mode="RGB")))


def read_image_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB")).copy()


def write_feature_grid(features: np.ndarray, path) -> None:
    """Store a ``(channels, height, width)`` grid in the flat binary format."""
    features = check_feature_grid(features)
    channels, height, width = features.shape
    header = _FEATURE_HEADER.pack(width, height, channels)
    payload = np.ascontiguousarray(features, dtype="<f4").tobytes()
    atomic_write_bytes(path, header + payload)


def read_feature_grid(path) -> np.ndarray:
    """Load a feature grid written by :func:`write_feature_grid`."""
    data = Path(path).read_bytes()
    if len(data) < _FEATURE_HEADER.size:
        raise CorruptDataError(f"{path}: truncated feature grid header")
    width, height, channels = _FEATURE_HEADER.unpack_from(data)
    if width <= 0 or height <= 0 or channels <= 0:
        raise CorruptDataError(f"{path}: bad feature grid header ({width}, {height}, {channels})")
    expected = _FEATURE_HEADER.size + 4 * width * height * channels
    if len(data) != expected:
        raise CorruptDataError(
            f"{path}: feature grid payload is {len(data) - _FEATURE_HEADER.size} bytes, "
            f"expected {expected - _FEATURE_HEADER.size}"
        )
    values = np.frombuffer(data, dtype="<f4", offset=_FEATURE_HEADER.size)
    return values.reshape((channels, height, width)).astype(np.float64)
