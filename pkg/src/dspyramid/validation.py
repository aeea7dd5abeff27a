"""Small input-validation helpers shared by the estimators and the functional API."""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError


def as_float_array(x, name: str = "array") -> np.ndarray:
    """Return ``x`` as a float64 ndarray, rejecting non-finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf values")
    return arr


def check_descriptors(x, d: int | None = None, min_rows: int = 1,
                      name: str = "descriptors") -> np.ndarray:
    """Validate a (T, d) descriptor matrix and return it as float64."""
    arr = as_float_array(x, name)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] < min_rows:
        raise ValidationError(
            f"{name} needs at least {min_rows} rows, got {arr.shape[0]}")
    if d is not None and arr.shape[1] != d:
        raise ValidationError(
            f"{name} has dimensionality {arr.shape[1]}, expected {d}")
    return arr


def check_vector(x, d: int | None = None, name: str = "vector") -> np.ndarray:
    """Validate a 1-D real vector and return it as float64."""
    arr = as_float_array(x, name)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if d is not None and arr.shape[0] != d:
        raise ValidationError(f"{name} has length {arr.shape[0]}, expected {d}")
    return arr


def check_count(value: int, name: str, minimum: int = 1) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValidationError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValidationError(f"{name} must be a positive finite number, got {value}")
    return value
