"""Encoded-feature files, dataset manifests and atomic file replacement.

A feature file stores one encoded vector per image together with the
pipeline configuration that produced it:

    magic "DFVF" | u32 version | u32 n_records | u32 feature_dim
    u32 config_len | config_len bytes of UTF-8 JSON
    then per record:
    u32 id_len | id bytes | i32 label | feature_dim float32 LE

All integers are little-endian. Vectors are stored in float32 and
promoted to float64 on load.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .exceptions import CorruptionError, FormatError, ValidationError
from .validation import as_float_array

FEATURES_MAGIC = b"DFVF"
FEATURES_VERSION = 1

_HEADER = struct.Struct("<4sIII")
_U32 = struct.Struct("<I")
_I32 = struct.Struct("<i")


@contextmanager
def atomic_write(path, mode: str = "wb"):
    """Write to a sibling temp file and rename over the target on success."""
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-",
                               suffix=os.path.basename(os.fspath(path)))
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


@dataclass(frozen=True)
class FeatureSet:
    """Encoded vectors with image ids, labels and the producing config."""

    ids: tuple[str, ...]
    labels: np.ndarray
    features: np.ndarray
    config: PipelineConfig

    def __post_init__(self):
        features = as_float_array(self.features, "features")
        labels = np.asarray(self.labels, dtype=np.int64)
        ids = tuple(str(i) for i in self.ids)
        if features.ndim != 2:
            raise ValidationError(f"features must be 2-D, got shape {features.shape}")
        if not (len(ids) == labels.shape[0] == features.shape[0]):
            raise ValidationError(
                f"record count mismatch: {len(ids)} ids, {labels.shape[0]} labels, "
                f"{features.shape[0]} feature rows")
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate image ids in feature set")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "features", features)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def save_features(feature_set: FeatureSet, path) -> None:
    config_blob = json.dumps(feature_set.config.to_dict()).encode("utf-8")
    with atomic_write(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURES_MAGIC, FEATURES_VERSION,
                              feature_set.n, feature_set.dim))
        fh.write(_U32.pack(len(config_blob)))
        fh.write(config_blob)
        for image_id, label, row in zip(feature_set.ids, feature_set.labels,
                                        feature_set.features):
            id_bytes = image_id.encode("utf-8")
            fh.write(_U32.pack(len(id_bytes)))
            fh.write(id_bytes)
            fh.write(_I32.pack(int(label)))
            fh.write(np.ascontiguousarray(row, dtype="<f4").tobytes())


def _read_exact(fh, count: int, path, what: str) -> bytes:
    blob = fh.read(count)
    if len(blob) != count:
        raise CorruptionError(f"{path}: truncated while reading {what} "
                              f"({len(blob)} of {count} bytes)")
    return blob


def load_features(path) -> FeatureSet:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FormatError(f"{path}: file too short for a feature header")
        magic, version, n_records, dim = _HEADER.unpack(header)
        if magic != FEATURES_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, "
                              f"expected {FEATURES_MAGIC!r}")
        if version != FEATURES_VERSION:
            raise FormatError(f"{path}: unsupported feature file version {version}")
        (config_len,) = _U32.unpack(_read_exact(fh, _U32.size, path, "config length"))
        config_blob = _read_exact(fh, config_len, path, "config block")
        try:
            config = PipelineConfig.from_dict(json.loads(config_blob.decode("utf-8")))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CorruptionError(f"{path}: unreadable config block ({exc})") from exc
        ids = []
        labels = np.empty(n_records, dtype=np.int64)
        features = np.empty((n_records, dim))
        for i in range(n_records):
            (id_len,) = _U32.unpack(_read_exact(fh, _U32.size, path, f"record {i}"))
            ids.append(_read_exact(fh, id_len, path, f"record {i} id").decode("utf-8"))
            (labels[i],) = _I32.unpack(_read_exact(fh, _I32.size, path,
                                                   f"record {i} label"))
            raw = _read_exact(fh, 4 * dim, path, f"record {i} vector")
            features[i] = np.frombuffer(raw, dtype="<f4")
        if fh.read(1):
            raise CorruptionError(f"{path}: trailing bytes after the last record")
    if not np.isfinite(features).all():
        raise CorruptionError(f"{path}: non-finite feature values")
    return FeatureSet(ids=tuple(ids), labels=labels, features=features, config=config)


@dataclass(frozen=True)
class ManifestEntry:
    """One descriptor-grid file with its image id, label and scale tag."""

    image_id: str
    label: int
    path: str
    scale: float = 1.0


def load_manifest(path) -> list[ManifestEntry]:
    """Parse a tab-separated manifest: image-id, label-id, path[, scale].

    Blank lines and lines starting with "#" are skipped. Relative grid
    paths are resolved against the manifest's directory.
    """
    base = os.path.dirname(os.path.abspath(os.fspath(path)))
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (3, 4):
                raise FormatError(
                    f"{path}:{lineno}: expected 3 or 4 tab-separated fields, "
                    f"got {len(parts)}")
            image_id, label_text, grid_path = parts[0], parts[1], parts[2]
            try:
                label = int(label_text)
            except ValueError as exc:
                raise FormatError(
                    f"{path}:{lineno}: label must be an integer, "
                    f"got {label_text!r}") from exc
            scale = 1.0
            if len(parts) == 4:
                try:
                    scale = float(parts[3])
                except ValueError as exc:
                    raise FormatError(
                        f"{path}:{lineno}: scale must be a number, "
                        f"got {parts[3]!r}") from exc
                if not np.isfinite(scale) or scale <= 0:
                    raise FormatError(
                        f"{path}:{lineno}: scale must be finite and positive")
            if not os.path.isabs(grid_path):
                grid_path = os.path.join(base, grid_path)
            entries.append(ManifestEntry(image_id=image_id, label=label,
                                         path=grid_path, scale=scale))
    if not entries:
        raise FormatError(f"{path}: manifest has no entries")
    return entries


def group_by_image(entries) -> dict[str, list[ManifestEntry]]:
    """Group manifest entries by image id, preserving first-seen order.

    Entries for one image must agree on the label and must not repeat a
    scale.
    """
    groups: dict[str, list[ManifestEntry]] = {}
    for entry in entries:
        groups.setdefault(entry.image_id, []).append(entry)
    for image_id, group in groups.items():
        labels = {e.label for e in group}
        if len(labels) != 1:
            raise FormatError(f"image {image_id!r} appears with conflicting "
                              f"labels {sorted(labels)}")
        scales = [e.scale for e in group]
        if len(set(scales)) != len(scales):
            raise FormatError(f"image {image_id!r} repeats a scale tag")
    return groups
