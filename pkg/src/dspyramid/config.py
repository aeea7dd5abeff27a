"""Pipeline configuration record shared by the CLI and the estimators.

A single frozen dataclass carries every tunable of the encoding and
training pipeline so that encoded-feature files can embed the exact
settings that produced them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

from .exceptions import FormatError, ValidationError
from .grid import NormalizationMode
from .multiscale import DEFAULT_SCALES, check_scales


@dataclass(frozen=True)
class PipelineConfig:
    """Settings for descriptor normalization, encoding and training."""

    n_components: int = 2
    levels: int = 2
    normalization: str = NormalizationMode.L2_MATRIX.value
    scales: tuple[float, ...] = DEFAULT_SCALES
    svm_c: float = 1.0
    seed: int = 0
    pca_dim: int | None = None

    def __post_init__(self):
        if self.n_components < 1:
            raise ValidationError(f"n_components must be >= 1, got {self.n_components}")
        if self.levels not in (1, 2):
            raise ValidationError(f"levels must be 1 or 2, got {self.levels}")
        NormalizationMode.from_string(self.normalization)
        scales = tuple(float(s) for s in self.scales)
        check_scales(scales)
        object.__setattr__(self, "scales", scales)
        if self.svm_c <= 0:
            raise ValidationError(f"svm_c must be positive, got {self.svm_c}")
        if self.pca_dim is not None and self.pca_dim < 1:
            raise ValidationError(f"pca_dim must be >= 1, got {self.pca_dim}")

    @property
    def normalization_mode(self) -> NormalizationMode:
        return NormalizationMode.from_string(self.normalization)

    def feature_dim(self, descriptor_dim: int) -> int:
        """Length of one encoded image vector for d-dimensional descriptors."""
        d = self.pca_dim if self.pca_dim is not None else descriptor_dim
        regions = 1 if self.levels == 1 else 6
        return 2 * d * self.n_components * regions

    def to_dict(self) -> dict:
        return {
            "n_components": self.n_components,
            "levels": self.levels,
            "normalization": self.normalization,
            "scales": list(self.scales),
            "svm_c": self.svm_c,
            "seed": self.seed,
            "pca_dim": self.pca_dim,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise FormatError(f"unknown configuration keys: {unknown}")
        kwargs = dict(payload)
        if "scales" in kwargs:
            kwargs["scales"] = tuple(kwargs["scales"])
        return cls(**kwargs)

    def replace(self, **overrides) -> "PipelineConfig":
        merged = self.to_dict()
        merged.update(overrides)
        if "scales" in merged and merged["scales"] is not None:
            merged["scales"] = tuple(merged["scales"])
        return PipelineConfig.from_dict(merged)


def load_config(path) -> PipelineConfig:
    """Read a configuration JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(payload, dict):
        raise FormatError(f"{path}: configuration must be a JSON object")
    return PipelineConfig.from_dict(payload)


def save_config(config: PipelineConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=1)
        fh.write("\n")
