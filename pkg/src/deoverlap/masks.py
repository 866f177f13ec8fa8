"""Binary and probabilistic raster primitives.

Masks are row-major ``(height, width)`` boolean numpy arrays, probability
grids are float arrays in ``[0, 1]`` of the same layout.  All operations are
pure: inputs are never mutated and results are freshly allocated, so values
can be shared freely across threads.

The RLE codec is row-major with alternating run lengths, the first run
counting zeros (possibly zero-length), so it interoperates with COCO-style
uncompressed counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CorruptDataError, InvalidInputError, UndefinedMetricError
from .validation import check_bit_mask, check_open_unit, check_same_shape


@dataclass(frozen=True)
class BBox:
    """Axis-aligned integer pixel box, half-open on the max edges."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvalidInputError(f"degenerate box {self.as_list()}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def slices(self) -> tuple[slice, slice]:
        """(row, column) slices for indexing a ``(height, width)`` array."""
        return slice(self.y_min, self.y_max), slice(self.x_min, self.x_max)

    def within(self, width: int, height: int) -> bool:
        return 0 <= self.x_min and 0 <= self.y_min and self.x_max <= width and self.y_max <= height

    def as_list(self) -> list[int]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @classmethod
    def from_list(cls, values) -> "BBox":
        if len(values) != 4:
            raise InvalidInputError(f"box must have 4 coordinates, got {len(values)}")
        return cls(*(int(v) for v in values))

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "BBox":
        """Tight bounding box of the set pixels; mask must be non-empty."""
        mask = check_bit_mask(mask)
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        if rows.size == 0:
            raise InvalidInputError("cannot compute bounding box of an empty mask")
        return cls(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


def area(mask: np.ndarray) -> int:
    """Number of set pixels."""
    return int(np.count_nonzero(check_bit_mask(mask)))


def intersect(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = check_bit_mask(a, "a"), check_bit_mask(b, "b")
    check_same_shape(a, b, "masks")
    return a & b


def union(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = check_bit_mask(a, "a"), check_bit_mask(b, "b")
    check_same_shape(a, b, "masks")
    return a | b


def difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pixels set in ``a`` but not in ``b``."""
    a, b = check_bit_mask(a, "a"), check_bit_mask(b, "b")
    check_same_shape(a, b, "masks")
    return a & ~b


def xor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = check_bit_mask(a, "a"), check_bit_mask(b, "b")
    check_same_shape(a, b, "masks")
    return a ^ b


def union_all(masks, height: int | None = None, width: int | None = None) -> np.ndarray:
    """Union of an iterable of masks; explicit shape required when it is empty."""
    out = None
    for m in masks:
        m = check_bit_mask(m)
        out = m.copy() if out is None else out | m
    if out is None:
        if height is None or width is None:
            raise InvalidInputError("union of no masks needs explicit height/width")
        out = np.zeros((height, width), dtype=bool)
    return out


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union; undefined (raises) when both masks are empty."""
    a, b = check_bit_mask(a, "a"), check_bit_mask(b, "b")
    check_same_shape(a, b, "masks")
    u = int(np.count_nonzero(a | b))
    if u == 0:
        raise UndefinedMetricError("IoU undefined: both masks are empty")
    return int(np.count_nonzero(a & b)) / u


def rle_encode(mask: np.ndarray) -> list[int]:
    """Encode a mask as row-major alternating run lengths, zeros first.

    An all-zero ``2x2`` mask encodes to ``[4]``; an all-one mask to ``[0, 4]``.
    """
    mask = check_bit_mask(mask)
    flat = mask.ravel(order="C").astype(np.int8)
    if flat.size == 0:
        raise InvalidInputError("cannot encode an empty raster")
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    edges = np.concatenate(([0], boundaries, [flat.size]))
    runs = np.diff(edges).tolist()
    if flat[0] == 1:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(runs, width: int, height: int) -> np.ndarray:
    """Decode alternating run lengths (zeros first) into a ``(height, width)`` mask."""
    if width <= 0 or height <= 0:
        raise InvalidInputError("width and height must be positive")
    runs = list(runs)
    if not runs:
        raise CorruptDataError("RLE must contain at least one run")
    for r in runs:
        if not isinstance(r, (int, np.integer)) or r < 0:
            raise CorruptDataError(f"RLE runs must be non-negative integers, got {r!r}")
    total = sum(runs)
    if total != width * height:
        raise CorruptDataError(
            f"RLE run sum {total} does not match raster size {width * height}"
        )
    values = np.zeros(len(runs), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, runs)
    return flat.reshape((height, width))


def binarize(grid: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Threshold a probability grid with a strict ``>`` comparison.

    Pixels exactly equal to the threshold stay clear, which makes tie
    handling deterministic.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise InvalidInputError("grid must be 2-D")
    threshold = check_open_unit(threshold, "threshold")
    return grid > threshold


def resize_nearest(arr: np.ndarray, out_height: int, out_width: int) -> np.ndarray:
    """Nearest-neighbor resample to ``(out_height, out_width)``.

    Output index ``i`` maps to source index ``floor(i * src / out)``, so exact
    integer upscaling replicates pixels into uniform blocks.
    """
    if out_height <= 0 or out_width <= 0:
        raise InvalidInputError("output dimensions must be positive")
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise InvalidInputError("array must be 2-D")
    in_h, in_w = arr.shape
    rows = (np.arange(out_height) * in_h) // out_height
    cols = (np.arange(out_width) * in_w) // out_width
    return arr[np.ix_(rows, cols)]


def paste(src: np.ndarray, dst: np.ndarray, box: BBox, mode: str = "sum") -> np.ndarray:
    """Resample ``src`` into ``box`` of a copy of ``dst`` and combine.

    ``src`` may have any 2-D shape; it is nearest-neighbor resampled to the
    box size.  ``sum`` accumulates raw values (no clipping -- the caller
    normalizes), ``max`` keeps the elementwise maximum.  Pixels outside the
    box are untouched.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.ndim != 2 or dst.ndim != 2:
        raise InvalidInputError("src and dst must be 2-D")
    h, w = dst.shape
    if not box.within(w, h):
        raise InvalidInputError(f"box {box.as_list()} exceeds destination {w}x{h}")
    if mode not in ("sum", "max"):
        raise InvalidInputError(f"mode must be 'sum' or 'max', got {mode!r}")
    patch = resize_nearest(src, box.height, box.width)
    out = dst.copy()
    region = out[box.slices]
    out[box.slices] = region + patch if mode == "sum" else np.maximum(region, patch)
    return out
