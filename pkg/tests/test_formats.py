"""Feature files, manifests and atomic writes."""

import os

import numpy as np
import pytest

from dspyramid import (CorruptionError, FeatureSet, FormatError,
                       PipelineConfig, ValidationError, atomic_write,
                       group_by_image, load_features, load_manifest,
                       save_features)


def small_feature_set(rng, n=4, dim=6):
    feats = rng.normal(size=(n, dim)).astype(np.float32).astype(np.float64)
    return FeatureSet(ids=tuple(f"img{i}" for i in range(n)),
                      labels=np.arange(n) % 2,
                      features=feats,
                      config=PipelineConfig())


class TestFeatureSet:
    def test_rejects_duplicate_ids(self):
        with pytest.raises(ValidationError):
            FeatureSet(ids=("a", "a"), labels=np.array([0, 1]),
                       features=np.zeros((2, 3)), config=PipelineConfig())

    def test_rejects_count_mismatch(self):
        with pytest.raises(ValidationError):
            FeatureSet(ids=("a", "b"), labels=np.array([0]),
                       features=np.zeros((2, 3)), config=PipelineConfig())


class TestFeatureFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        fs = small_feature_set(rng)
        path = tmp_path / "f.dfvf"
        save_features(fs, path)
        loaded = load_features(path)
        assert loaded.ids == fs.ids
        assert np.array_equal(loaded.labels, fs.labels)
        # inputs were float32-representable, so the round trip is exact
        assert np.array_equal(loaded.features, fs.features)
        assert loaded.features.dtype == np.float64
        assert loaded.config == fs.config

    def test_config_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        config = PipelineConfig(n_components=4, levels=1, scales=(1.0, 0.5),
                                svm_c=3.0, seed=9, pca_dim=2)
        fs = FeatureSet(ids=("x",), labels=np.array([7]),
                        features=rng.normal(size=(1, 5)), config=config)
        path = tmp_path / "f.dfvf"
        save_features(fs, path)
        assert load_features(path).config == config

    def test_unicode_ids(self, tmp_path):
        fs = FeatureSet(ids=("café/01", "b"), labels=np.array([1, 2]),
                        features=np.zeros((2, 3)), config=PipelineConfig())
        path = tmp_path / "f.dfvf"
        save_features(fs, path)
        assert load_features(path).ids[0] == "café/01"

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "f.dfvf"
        path.write_bytes(b"XXXX" + b"\0" * 32)
        with pytest.raises(FormatError, match="magic"):
            load_features(path)

    def test_rejects_truncation(self, tmp_path):
        rng = np.random.default_rng(2)
        path = tmp_path / "f.dfvf"
        save_features(small_feature_set(rng), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:len(blob) - 5])
        with pytest.raises(CorruptionError, match="truncated"):
            load_features(path)

    def test_rejects_trailing_bytes(self, tmp_path):
        rng = np.random.default_rng(3)
        path = tmp_path / "f.dfvf"
        save_features(small_feature_set(rng), path)
        path.write_bytes(path.read_bytes() + b"\0")
        with pytest.raises(CorruptionError, match="trailing"):
            load_features(path)


class TestManifest:
    def test_basic_parse(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("# comment\n"
                        "a\t0\tgrids/a.dgrd\n"
                        "\n"
                        "b\t1\t/abs/b.dgrd\t0.8\n")
        entries = load_manifest(path)
        assert len(entries) == 2
        assert entries[0].image_id == "a"
        assert entries[0].label == 0
        assert entries[0].scale == 1.0
        # relative paths resolve against the manifest directory
        assert entries[0].path == str(tmp_path / "grids/a.dgrd")
        assert entries[1].path == "/abs/b.dgrd"
        assert entries[1].scale == 0.8

    def test_rejects_wrong_field_count(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("a\t0\n")
        with pytest.raises(FormatError, match="fields"):
            load_manifest(path)

    def test_rejects_bad_label(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("a\tcat\tx.dgrd\n")
        with pytest.raises(FormatError, match="label"):
            load_manifest(path)

    def test_rejects_bad_scale(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("a\t0\tx.dgrd\tbig\n")
        with pytest.raises(FormatError, match="scale"):
            load_manifest(path)
        path.write_text("a\t0\tx.dgrd\t-2\n")
        with pytest.raises(FormatError, match="scale"):
            load_manifest(path)

    def test_rejects_empty(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("# nothing here\n")
        with pytest.raises(FormatError, match="no entries"):
            load_manifest(path)

    def test_error_names_line_number(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("a\t0\tx.dgrd\nb\tbad\ty.dgrd\n")
        with pytest.raises(FormatError, match=":2:"):
            load_manifest(path)


class TestGroupByImage:
    def make(self, tmp_path, text):
        path = tmp_path / "m.tsv"
        path.write_text(text)
        return load_manifest(path)

    def test_groups_preserve_first_seen_order(self, tmp_path):
        entries = self.make(tmp_path,
                            "b\t0\tb1.dgrd\t1.0\n"
                            "a\t1\ta1.dgrd\t1.0\n"
                            "b\t0\tb2.dgrd\t0.8\n")
        groups = group_by_image(entries)
        assert list(groups) == ["b", "a"]
        assert [e.scale for e in groups["b"]] == [1.0, 0.8]

    def test_conflicting_labels_rejected(self, tmp_path):
        entries = self.make(tmp_path,
                            "a\t0\ta1.dgrd\t1.0\na\t1\ta2.dgrd\t0.8\n")
        with pytest.raises(FormatError, match="conflicting"):
            group_by_image(entries)

    def test_repeated_scale_rejected(self, tmp_path):
        entries = self.make(tmp_path,
                            "a\t0\ta1.dgrd\t1.0\na\t0\ta2.dgrd\t1.0\n")
        with pytest.raises(FormatError, match="repeats"):
            group_by_image(entries)


class TestAtomicWrite:
    def test_success_replaces_target(self, tmp_path):
        path = tmp_path / "out.bin"
        path.write_bytes(b"old")
        with atomic_write(path) as fh:
            fh.write(b"new")
        assert path.read_bytes() == b"new"

    def test_failure_leaves_no_trace(self, tmp_path):
        path = tmp_path / "out.bin"
        with pytest.raises(RuntimeError):
            with atomic_write(path) as fh:
                fh.write(b"partial")
                raise RuntimeError("boom")
        assert not path.exists()
        assert os.listdir(tmp_path) == []

    def test_failure_preserves_previous_content(self, tmp_path):
        path = tmp_path / "out.bin"
        path.write_bytes(b"keep me")
        with pytest.raises(RuntimeError):
            with atomic_write(path) as fh:
                fh.write(b"partial")
                raise RuntimeError("boom")
        assert path.read_bytes() == b"keep me"
