"""Average pooling of per-scale pyramid vectors into one representation."""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError
from .fisher import l2_normalize
from .validation import as_float_array

# Rescale factors of the reference multi-scale configuration.
DEFAULT_SCALES = (1.4, 1.2, 1.0, 0.8, 0.6)


def check_scales(scales) -> tuple[float, ...]:
    """Validate a scale list: non-empty, positive, finite, no duplicates."""
    out = tuple(float(s) for s in scales)
    if not out:
        raise ValidationError("scale set must not be empty")
    if any(not np.isfinite(s) or s <= 0 for s in out):
        raise ValidationError(f"scales must all be positive and finite, got {out}")
    if len(set(out)) != len(out):
        raise ValidationError(f"scale set contains duplicates: {out}")
    return out


def merge_scales(vectors) -> np.ndarray:
    """Average the per-scale vectors and re-normalize to unit l2 norm.

    Inputs are expected to be unit-norm (or zero) already; a single
    vector is returned unchanged. A zero average stays zero.
    """
    if len(vectors) == 0:
        raise ValidationError("merge_scales needs at least one vector")
    arrays = [as_float_array(v, f"scale vector {i}") for i, v in enumerate(vectors)]
    length = arrays[0].shape
    for i, arr in enumerate(arrays[1:], start=1):
        if arr.shape != length:
            raise ValidationError(
                f"scale vector {i} has shape {arr.shape}, expected {length}")
    if len(arrays) == 1:
        return arrays[0].copy()
    mean = np.mean(arrays, axis=0)
    return l2_normalize(mean)
