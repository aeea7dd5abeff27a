"""Command-line surface: wiring, determinism and failure modes."""

import json
import os

import numpy as np
import pytest

from dspyramid import DescriptorGrid, load_features, load_gmm, save_grid
from dspyramid.cli import main

SCALES = (1.0, 0.5)


def build_corpus(root, n_classes=3, n_images=4, d=6, seed=0, scales=SCALES):
    """Synthetic per-class descriptor distributions, one grid per scale."""
    rng = np.random.default_rng(seed)
    lines = []
    for cls in range(n_classes):
        direction = np.zeros(d)
        direction[cls % d] = 4.0
        for i in range(n_images):
            image = f"c{cls}i{i}"
            for s in scales:
                side = max(2, round(4 * s))
                vals = rng.normal(loc=direction, size=(side, side, d))
                name = f"{image}_s{s}.dgrd"
                save_grid(DescriptorGrid(values=vals, scale_tag=s), root / name)
                lines.append(f"{image}\t{cls}\t{name}\t{s}")
    manifest = root / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


@pytest.fixture()
def corpus(tmp_path):
    return build_corpus(tmp_path)


def run(*argv):
    return main([str(a) for a in argv])


class TestTrainGmm:
    def test_trains_and_writes_model(self, tmp_path, corpus):
        out = tmp_path / "gmm.json"
        assert run("train-gmm", "--manifest", corpus, "--output", out,
                   "--k", 2, "--seed", 0) == 0
        model, payload = load_gmm(out)
        assert model.n_components == 2
        assert payload["pipeline_config"]["n_components"] == 2

    def test_uses_scale_one_entries_by_default(self, tmp_path, corpus, capsys):
        out = tmp_path / "gmm.json"
        run("train-gmm", "--manifest", corpus, "--output", out)
        # 3 classes x 4 images, scale-1.0 grids only
        assert "from 12 grids" in capsys.readouterr().out

    def test_all_scales_pools_everything(self, tmp_path, corpus, capsys):
        out = tmp_path / "gmm.json"
        run("train-gmm", "--manifest", corpus, "--output", out, "--all-scales")
        assert "from 24 grids" in capsys.readouterr().out

    def test_max_per_image_reduces_pool(self, tmp_path, corpus, capsys):
        out = tmp_path / "gmm.json"
        run("train-gmm", "--manifest", corpus, "--output", out,
            "--max-per-image", 3)
        assert "on 36 descriptors" in capsys.readouterr().out

    def test_missing_files_enumerated(self, tmp_path, corpus, capsys):
        (tmp_path / "c0i0_s1.0.dgrd").unlink()
        (tmp_path / "c1i0_s1.0.dgrd").unlink()
        code = run("train-gmm", "--manifest", corpus,
                   "--output", tmp_path / "gmm.json")
        assert code == 1
        err = capsys.readouterr().err
        assert "c0i0_s1.0.dgrd" in err and "c1i0_s1.0.dgrd" in err
        assert not (tmp_path / "gmm.json").exists()

    def test_deterministic_output_bytes(self, tmp_path, corpus):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run("train-gmm", "--manifest", corpus, "--output", a, "--seed", 5)
        run("train-gmm", "--manifest", corpus, "--output", b, "--seed", 5)
        assert a.read_bytes() == b.read_bytes()

    def test_pca_dim_recorded(self, tmp_path, corpus):
        out = tmp_path / "gmm.json"
        run("train-gmm", "--manifest", corpus, "--output", out, "--pca-dim", 3)
        model, payload = load_gmm(out)
        assert model.d == 3
        assert payload["pca"] is not None


class TestEncode:
    @pytest.fixture()
    def gmm_path(self, tmp_path, corpus):
        out = tmp_path / "gmm.json"
        run("train-gmm", "--manifest", corpus, "--output", out)
        return out

    def test_merges_configured_scales(self, tmp_path, corpus, gmm_path):
        out = tmp_path / "f.dfvf"
        assert run("encode", "--manifest", corpus, "--model", gmm_path,
                   "--output", out, "--scales", *SCALES) == 0
        fs = load_features(out)
        assert fs.n == 12
        assert fs.dim == 2 * 6 * 2 * 6
        assert fs.config.scales == SCALES
        np.testing.assert_allclose(np.linalg.norm(fs.features, axis=1), 1.0,
                                   rtol=1e-6)

    def test_records_follow_manifest_order(self, tmp_path, corpus, gmm_path):
        out = tmp_path / "f.dfvf"
        run("encode", "--manifest", corpus, "--model", gmm_path,
            "--output", out, "--scales", *SCALES)
        fs = load_features(out)
        assert fs.ids[:4] == ("c0i0", "c0i1", "c0i2", "c0i3")

    def test_workers_do_not_change_bytes(self, tmp_path, corpus, gmm_path):
        a, b = tmp_path / "a.dfvf", tmp_path / "b.dfvf"
        run("encode", "--manifest", corpus, "--model", gmm_path,
            "--output", a, "--scales", *SCALES)
        run("encode", "--manifest", corpus, "--model", gmm_path,
            "--output", b, "--scales", *SCALES, "--workers", 4)
        assert a.read_bytes() == b.read_bytes()

    def test_missing_scale_names_image_and_scale(self, tmp_path, corpus,
                                                 gmm_path, capsys):
        code = run("encode", "--manifest", corpus, "--model", gmm_path,
                   "--output", tmp_path / "f.dfvf", "--scales", 1.0, 0.7)
        assert code == 1
        err = capsys.readouterr().err
        assert "c0i0" in err and "0.7" in err
        assert not (tmp_path / "f.dfvf").exists()

    def test_flags_override_embedded_config(self, tmp_path, corpus, gmm_path):
        out = tmp_path / "f.dfvf"
        run("encode", "--manifest", corpus, "--model", gmm_path,
            "--output", out, "--scales", 1.0, "--levels", 1)
        fs = load_features(out)
        assert fs.dim == 2 * 6 * 2
        assert fs.config.levels == 1


class TestFullPipeline:
    def test_train_eval_predict(self, tmp_path, corpus, capsys):
        gmm = tmp_path / "gmm.json"
        feats = tmp_path / "f.dfvf"
        svm = tmp_path / "svm.json"
        run("train-gmm", "--manifest", corpus, "--output", gmm)
        run("encode", "--manifest", corpus, "--model", gmm,
            "--output", feats, "--scales", *SCALES)
        assert run("train-svm", "--features", feats, "--output", svm) == 0
        capsys.readouterr()

        assert run("eval", "--features", feats, "--model", svm) == 0
        report = capsys.readouterr().out
        assert "samples: 12" in report
        assert "accuracy: 1.000000" in report
        assert "class 0: 1.000000 (n=4)" in report
        assert "mAP: 1.000000" in report

        out = tmp_path / "pred.tsv"
        assert run("predict", "--features", feats, "--model", svm,
                   "--output", out) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("image_id\tpredicted\tscore_0")
        assert len(lines) == 13
        assert lines[1].split("\t")[:2] == ["c0i0", "0"]

    def test_eval_report_is_byte_stable(self, tmp_path, corpus, capsys):
        gmm = tmp_path / "gmm.json"
        feats = tmp_path / "f.dfvf"
        svm = tmp_path / "svm.json"
        run("train-gmm", "--manifest", corpus, "--output", gmm)
        run("encode", "--manifest", corpus, "--model", gmm,
            "--output", feats, "--scales", *SCALES)
        run("train-svm", "--features", feats, "--output", svm)
        capsys.readouterr()
        run("eval", "--features", feats, "--model", svm)
        first = capsys.readouterr().out
        run("eval", "--features", feats, "--model", svm)
        assert capsys.readouterr().out == first


class TestGmmStats:
    def test_tsv_output(self, tmp_path, corpus, capsys):
        gmm = tmp_path / "gmm.json"
        run("train-gmm", "--manifest", corpus, "--output", gmm, "--k", 3)
        capsys.readouterr()
        assert run("gmm-stats", "--model", gmm) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "rank\tcomponent\tweight\tcumulative_weight"
        assert len(lines) == 4
        weights = [float(l.split("\t")[2]) for l in lines[1:]]
        assert weights == sorted(weights, reverse=True)
        assert float(lines[-1].split("\t")[3]) == pytest.approx(1.0)


class TestConfigHandling:
    def test_config_file_with_flag_override(self, tmp_path, corpus):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n_components": 2, "seed": 3,
                                   "scales": [1.0]}))
        out = tmp_path / "gmm.json"
        run("train-gmm", "--manifest", corpus, "--output", out,
            "--config", cfg, "--k", 3)
        model, payload = load_gmm(out)
        assert model.n_components == 3
        assert payload["pipeline_config"]["seed"] == 3

    def test_unknown_config_key_fails(self, tmp_path, corpus, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n_comps": 2}))
        assert run("train-gmm", "--manifest", corpus,
                   "--output", tmp_path / "g.json", "--config", cfg) == 1
        assert "unknown configuration keys" in capsys.readouterr().err


class TestErrorHandling:
    def test_missing_manifest(self, tmp_path, capsys):
        assert run("train-gmm", "--manifest", tmp_path / "none.tsv",
                   "--output", tmp_path / "g.json") == 1
        assert "error:" in capsys.readouterr().err

    def test_no_temp_files_after_failure(self, tmp_path, corpus):
        (tmp_path / "c0i0_s1.0.dgrd").unlink()
        run("train-gmm", "--manifest", corpus, "--output", tmp_path / "g.json")
        leftovers = [n for n in os.listdir(tmp_path) if n.startswith(".tmp-")]
        assert leftovers == []

    def test_unknown_command_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2
