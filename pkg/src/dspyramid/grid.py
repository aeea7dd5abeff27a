"""Descriptor grids and their pre-encoding normalizations.

A descriptor grid is the h x w arrangement of d-dimensional local
descriptors produced for one image at one scale (e.g. the max-pooled
last convolutional layer of a CNN). Grids are stored on disk in the
"DGRD" binary format (single precision) and computed on in double
precision.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    CorruptionError,
    DegenerateInputError,
    FormatError,
    ValidationError,
)
from .validation import as_float_array, check_count, check_descriptors

GRID_MAGIC = b"DGRD"
GRID_VERSION = 1
_HEADER = struct.Struct("<4sIIIIf")  # magic, version, h, w, d, scale_tag

# Power-iteration controls for the spectral norm (Gram-matrix form).
_POWER_MAX_ITER = 1000
_POWER_REL_TOL = 1e-10


class NormalizationMode(enum.Enum):
    """How descriptors are normalized before encoding."""

    NONE = "none"
    L2_VECTOR = "vector"
    L2_MATRIX = "matrix"

    @classmethod
    def from_string(cls, name: str) -> "NormalizationMode":
        for mode in cls:
            if mode.value == name:
                return mode
        valid = ", ".join(m.value for m in cls)
        raise ValidationError(f"unknown normalization mode {name!r} (valid: {valid})")


@dataclass(frozen=True)
class DescriptorGrid:
    """An h x w grid of d-dimensional descriptors for one image at one scale.

    ``values`` has shape (h, w, d) and is held in float64; the on-disk
    format is single precision. ``scale_tag`` records the rescale factor
    that produced the grid (1.0 for single-scale pipelines).
    """

    values: np.ndarray
    scale_tag: float = 1.0

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim != 3:
            raise ValidationError(
                f"grid values must have shape (h, w, d), got {arr.shape}")
        if min(arr.shape) < 1:
            raise ValidationError(f"grid dimensions must all be >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("grid values contain NaN or Inf")
        tag = float(self.scale_tag)
        if not np.isfinite(tag):
            raise ValidationError("scale_tag must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "scale_tag", tag)

    @property
    def h(self) -> int:
        return self.values.shape[0]

    @property
    def w(self) -> int:
        return self.values.shape[1]

    @property
    def d(self) -> int:
        return self.values.shape[2]

    @property
    def n_cells(self) -> int:
        return self.h * self.w

    @property
    def descriptors(self) -> np.ndarray:
        """The (h*w, d) row-major view of the grid."""
        return self.values.reshape(self.n_cells, self.d)


def load_grid(path) -> DescriptorGrid:
    """Read a DGRD file.

    Raises FormatError for a bad magic/version, CorruptionError when the
    payload length disagrees with the declared shape, and ValidationError
    for non-finite values.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: file too short for a DGRD header")
    magic, version, h, w, d, scale_tag = _HEADER.unpack_from(blob)
    if magic != GRID_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {GRID_MAGIC!r}")
    if version != GRID_VERSION:
        raise FormatError(f"{path}: unsupported DGRD version {version}")
    if min(h, w, d) < 1:
        raise CorruptionError(f"{path}: declared shape ({h}, {w}, {d}) is invalid")
    payload = blob[_HEADER.size:]
    expected = h * w * d * 4
    if len(payload) != expected:
        raise CorruptionError(
            f"{path}: payload holds {len(payload)} bytes, "
            f"declared shape ({h}, {w}, {d}) needs {expected}")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{path}: grid values contain NaN or Inf")
    return DescriptorGrid(values.reshape(h, w, d), scale_tag=float(scale_tag))


def save_grid(grid: DescriptorGrid, path) -> None:
    """Write ``grid`` in the DGRD format (values cast to float32 LE).

    I/O failures propagate as OSError with the offending path attached.
    """
    header = _HEADER.pack(GRID_MAGIC, GRID_VERSION, grid.h, grid.w, grid.d,
                          np.float32(grid.scale_tag))
    payload = np.ascontiguousarray(grid.values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def spectral_norm(grid) -> float:
    """Largest singular value of the (h*w, d) descriptor matrix.

    Accepts a DescriptorGrid or a plain 2-D matrix. Computed by power
    iteration on the d x d Gram matrix X^T X, stopping when successive
    Rayleigh-quotient estimates agree to 1e-10 relative.
    """
    if isinstance(grid, DescriptorGrid):
        x = grid.descriptors
    else:
        x = check_descriptors(grid, name="matrix")
    if not np.any(x):
        raise DegenerateInputError("spectral norm of an all-zero matrix is undefined")
    gram = x.T @ x
    col_sq = np.diag(gram)
    v = np.zeros(gram.shape[0])
    v[int(np.argmax(col_sq))] = 1.0
    est = 0.0
    for _ in range(_POWER_MAX_ITER):
        gv = gram @ v
        nrm = np.linalg.norm(gv)
        if nrm == 0.0:
            # v fell in the null space; restart from the heaviest column.
            v = np.zeros_like(v)
            v[int(np.argmax(col_sq))] = 1.0
            continue
        v = gv / nrm
        new_est = float(v @ (gram @ v))
        if est > 0.0 and abs(new_est - est) <= _POWER_REL_TOL * est:
            est = new_est
            break
        est = new_est
    return float(np.sqrt(max(est, 0.0)))


def normalize(grid: DescriptorGrid, mode: NormalizationMode) -> DescriptorGrid:
    """Apply the selected pre-encoding normalization.

    ``vector`` scales each descriptor to unit l2 norm (zero descriptors
    stay zero); ``matrix`` divides every descriptor by the one scalar
    spectral norm of the whole grid.
    """
    if not isinstance(mode, NormalizationMode):
        mode = NormalizationMode.from_string(mode)
    if mode is NormalizationMode.NONE:
        return grid
    if mode is NormalizationMode.L2_VECTOR:
        norms = np.linalg.norm(grid.values, axis=2, keepdims=True)
        safe = np.where(norms == 0.0, 1.0, norms)
        return DescriptorGrid(grid.values / safe, scale_tag=grid.scale_tag)
    sigma = spectral_norm(grid)  # raises DegenerateInputError on all-zero grids
    return DescriptorGrid(grid.values / sigma, scale_tag=grid.scale_tag)


@dataclass(frozen=True)
class PcaModel:
    """A fitted linear projection: x -> basis @ (x - mean)."""

    mean: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        mean = as_float_array(self.mean, "mean")
        basis = as_float_array(self.basis, "basis")
        if mean.ndim != 1 or basis.ndim != 2 or basis.shape[1] != mean.shape[0]:
            raise ValidationError(
                f"incompatible PCA shapes: mean {mean.shape}, basis {basis.shape}")
        if basis.shape[0] > basis.shape[1]:
            raise ValidationError("retained dimensionality exceeds input dimensionality")
        gram = basis @ basis.T
        if not np.allclose(gram, np.eye(basis.shape[0]), atol=1e-6):
            raise ValidationError("PCA basis rows are not orthonormal")
        mean.setflags(write=False)
        basis.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "basis", basis)

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @property
    def q(self) -> int:
        return self.basis.shape[0]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "basis": self.basis.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "PcaModel":
        return cls(mean=np.asarray(payload["mean"], dtype=np.float64),
                   basis=np.asarray(payload["basis"], dtype=np.float64))


def pca_fit(descriptors, q: int) -> PcaModel:
    """Fit a q-dimensional PCA (no whitening) on pooled descriptors.

    The basis rows are the top-q principal directions, ordered by
    decreasing eigenvalue of the sample covariance.
    """
    x = check_descriptors(descriptors)
    q = check_count(q, "q")
    n, d = x.shape
    if q > d:
        raise ValidationError(f"q={q} exceeds descriptor dimensionality {d}")
    if n < q + 1:
        raise ValidationError(f"PCA with q={q} needs at least {q + 1} samples, got {n}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = (centered.T @ centered) / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:q]
    basis = eigvecs[:, order].T
    # Fix signs so the largest-magnitude coefficient of each row is positive.
    for row in basis:
        peak = row[int(np.argmax(np.abs(row)))]
        if peak < 0:
            row *= -1.0
    return PcaModel(mean=mean, basis=basis)


def pca_apply(model: PcaModel, grid: DescriptorGrid) -> DescriptorGrid:
    """Project every descriptor of ``grid`` onto the PCA basis."""
    if grid.d != model.d:
        raise ValidationError(
            f"grid dimensionality {grid.d} does not match PCA model ({model.d})")
    projected = (grid.descriptors - model.mean) @ model.basis.T
    return DescriptorGrid(projected.reshape(grid.h, grid.w, model.q),
                          scale_tag=grid.scale_tag)
