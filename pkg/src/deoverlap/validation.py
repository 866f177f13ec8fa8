"""Input validation helpers, in the spirit of ``sklearn.utils.validation``.

All raster inputs are plain numpy arrays:

* binary masks    -- 2-D ``bool`` arrays, shape ``(height, width)``
* probability grids -- 2-D float arrays with values in ``[0, 1]``
* feature grids   -- 3-D float arrays, shape ``(channels, height, width)``

The ``check_*`` functions coerce compatible inputs (lists, other dtypes) and
raise :class:`~deoverlap.errors.InvalidInputError` on violations.  They return
the validated array so calls can be chained inline.
"""

from __future__ import annotations

import numbers

import numpy as np

from .errors import DimensionMismatchError, InvalidInputError


def check_bit_mask(mask, name: str = "mask") -> np.ndarray:
    """Validate and return a 2-D boolean mask."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.dtype != np.bool_:
        if not np.isin(arr, (0, 1)).all():
            raise InvalidInputError(f"{name} must be binary (0/1 or bool)")
        arr = arr.astype(bool)
    return arr


def check_prob_grid(grid, name: str = "grid") -> np.ndarray:
    """Validate and return a 2-D float64 grid with values in [0, 1]."""
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if not np.isfinite(arr).all():
        raise InvalidInputError(f"{name} contains non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise InvalidInputError(f"{name} values must lie in [0, 1]")
    return arr


def check_feature_grid(features, name: str = "features") -> np.ndarray:
    """Validate and return a 3-D ``(channels, height, width)`` float array."""
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim != 3:
        raise InvalidInputError(f"{name} must be 3-D (channels, height, width)")
    if arr.shape[0] < 1:
        raise InvalidInputError(f"{name} must have at least one channel")
    if not np.isfinite(arr).all():
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "inputs") -> None:
    """Raise unless the two rasters share a shape."""
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"{what} must share dimensions, got {a.shape} vs {b.shape}"
        )


def check_open_unit(value, name: str = "value") -> float:
    """Validate a scalar strictly inside (0, 1), e.g. a binarization threshold."""
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise InvalidInputError(f"{name} must be a finite real number")
    value = float(value)
    if not 0.0 < value < 1.0:
        raise InvalidInputError(f"{name} must lie strictly inside (0, 1), got {value}")
    return value


def check_non_negative(value, name: str = "value") -> float:
    """Validate a finite scalar >= 0."""
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise InvalidInputError(f"{name} must be a finite real number")
    value = float(value)
    if value < 0.0:
        raise InvalidInputError(f"{name} must be non-negative, got {value}")
    return value
