"""Command-line pipeline: dictionary training, encoding, classification.

Subcommands:
    train-gmm   fit the visual dictionary from a grid manifest
    encode      turn per-scale grids into merged feature vectors
    train-svm   fit the one-vs-rest linear classifier
    predict     per-image predicted labels and scores
    eval        accuracy, per-class accuracy and mAP report
    gmm-stats   descending mixture weights as plot-ready TSV

Every command exits nonzero on error and writes output files through a
temp-file-plus-rename so partial files are never left behind. With a
fixed seed, reruns produce bit-identical outputs.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import PipelineConfig, load_config
from .exceptions import DspError, ValidationError
from .formats import (FeatureSet, ManifestEntry, group_by_image, load_features,
                      load_manifest, save_features)
from .gmm import GmmFitConfig, gmm_fit, gmm_priors_report, load_gmm, save_gmm
from .grid import NormalizationMode, PcaModel, load_grid, normalize, pca_apply, pca_fit
from .multiscale import merge_scales
from .pyramid import build_layout, dsp_encode
from .svm import (Dataset, average_precision, decision_scores, evaluate_accuracy,
                  load_linear_model, predict_labels, save_linear_model, svm_train)


def _atomic_json_save(save_fn, obj, path, **kwargs) -> None:
    """Run a path-based JSON saver against a temp file, then rename."""
    directory = os.path.dirname(os.path.abspath(os.fspath(path))) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    os.close(fd)
    try:
        save_fn(obj, tmp, **kwargs)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _resolve_config(args, base: PipelineConfig | None = None) -> PipelineConfig:
    """Layer configuration: base (embedded/default) <- --config file <- flags."""
    config = base if base is not None else PipelineConfig()
    if getattr(args, "config", None):
        config = load_config(args.config)
    overrides = {}
    flag_map = {
        "k": "n_components",
        "levels": "levels",
        "normalization": "normalization",
        "scales": "scales",
        "svm_c": "svm_c",
        "seed": "seed",
        "pca_dim": "pca_dim",
    }
    for flag, field in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    return config.replace(**overrides) if overrides else config


def _check_manifest_files(entries) -> None:
    missing = [e.path for e in entries if not os.path.isfile(e.path)]
    if missing:
        listing = "\n  ".join(missing)
        raise ValidationError(f"manifest references missing grid files:\n  {listing}")


def _load_entry_grid(entry: ManifestEntry):
    try:
        grid = load_grid(entry.path)
    except OSError as exc:
        raise ValidationError(
            f"image {entry.image_id!r} scale {entry.scale:g}: {exc}") from exc
    if abs(grid.scale_tag - entry.scale) > 1e-6:
        print(f"warning: image {entry.image_id!r}: manifest scale {entry.scale:g} "
              f"but grid tagged {grid.scale_tag:g}", file=sys.stderr)
    return grid


def cmd_train_gmm(args) -> int:
    config = _resolve_config(args)
    entries = load_manifest(args.manifest)
    if not args.all_scales:
        entries = [e for e in entries if e.scale == 1.0]
        if not entries:
            raise ValidationError(
                f"{args.manifest}: no scale-1.0 entries; pass --all-scales "
                f"to train on every scale")
    _check_manifest_files(entries)
    mode = config.normalization_mode
    grids = [_load_entry_grid(e) for e in entries]

    pca = None
    if config.pca_dim is not None:
        pooled_raw = np.vstack([g.values.reshape(-1, g.d) for g in grids])
        pca = pca_fit(pooled_raw, config.pca_dim)

    rng = np.random.default_rng(config.seed)
    pools = []
    for grid in grids:
        prepared = pca_apply(pca, grid) if pca is not None else grid
        cells = normalize(prepared, mode).values.reshape(-1, prepared.d)
        if args.max_per_image is not None and cells.shape[0] > args.max_per_image:
            keep = rng.choice(cells.shape[0], size=args.max_per_image, replace=False)
            cells = cells[np.sort(keep)]
        pools.append(cells)
    pooled = np.vstack(pools)

    fit_config = GmmFitConfig(n_components=config.n_components, seed=config.seed)
    model = gmm_fit(pooled, fit_config)
    extra = {
        "pipeline_config": config.to_dict(),
        "pca": pca.to_dict() if pca is not None else None,
        "n_training_descriptors": int(pooled.shape[0]),
    }
    _atomic_json_save(save_gmm, model, args.output, extra=extra)
    print(f"trained {model.n_components}-component model on {pooled.shape[0]} "
          f"descriptors from {len(grids)} grids -> {args.output}")
    return 0


def _encode_image(entries_for_image, scales, model, pca, mode, levels):
    """Encode one image: per-scale DSP vectors merged into one vector."""
    by_scale = {e.scale: e for e in entries_for_image}
    image_id = entries_for_image[0].image_id
    per_scale = []
    for s in scales:
        if s not in by_scale:
            raise ValidationError(f"image {image_id!r}: no grid for scale {s:g}")
        grid = _load_entry_grid(by_scale[s])
        if pca is not None:
            grid = pca_apply(pca, grid)
        layout = build_layout(grid.h, grid.w, levels=levels)
        per_scale.append(dsp_encode(grid, model, layout, mode=mode))
    return merge_scales(per_scale)


def cmd_encode(args) -> int:
    model, payload = load_gmm(args.model)
    base = None
    if isinstance(payload.get("pipeline_config"), dict):
        base = PipelineConfig.from_dict(payload["pipeline_config"])
    config = _resolve_config(args, base=base)
    if config.n_components != model.n_components:
        config = config.replace(n_components=model.n_components)
    pca = None
    if payload.get("pca") is not None:
        pca = PcaModel.from_dict(payload["pca"])

    entries = load_manifest(args.manifest)
    groups = group_by_image(entries)
    mode = config.normalization_mode
    order = list(groups.items())

    def encode_one(item):
        _, group = item
        return _encode_image(group, config.scales, model, pca, mode, config.levels)

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            vectors = list(pool.map(encode_one, order))
    else:
        vectors = [encode_one(item) for item in order]

    ids = tuple(image_id for image_id, _ in order)
    labels = np.array([group[0].label for _, group in order], dtype=np.int64)
    feature_set = FeatureSet(ids=ids, labels=labels,
                             features=np.vstack(vectors), config=config)
    save_features(feature_set, args.output)
    print(f"encoded {feature_set.n} images x {feature_set.dim} dims "
          f"({len(config.scales)} scales) -> {args.output}")
    return 0


def cmd_train_svm(args) -> int:
    feature_set = load_features(args.features)
    config = _resolve_config(args, base=feature_set.config)
    data = Dataset(features=feature_set.features, labels=feature_set.labels)
    model = svm_train(data, c=config.svm_c, seed=config.seed)
    _atomic_json_save(save_linear_model, model, args.output,
                      extra={"pipeline_config": config.to_dict()})
    print(f"trained {len(model.classes)}-class linear model on {data.n} "
          f"samples -> {args.output}")
    return 0


def cmd_predict(args) -> int:
    feature_set = load_features(args.features)
    model, _ = load_linear_model(args.model)
    scores = decision_scores(model, feature_set.features)
    predicted = predict_labels(model, feature_set.features)
    header = "image_id\tpredicted\t" + "\t".join(
        f"score_{c}" for c in model.classes)
    lines = [header]
    for image_id, label, row in zip(feature_set.ids, predicted, scores):
        cells = "\t".join(f"{v:.9g}" for v in row)
        lines.append(f"{image_id}\t{int(label)}\t{cells}")
    text = "\n".join(lines) + "\n"
    if args.output:
        directory = os.path.dirname(os.path.abspath(args.output)) or "."
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".tsv")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, args.output)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise
    else:
        sys.stdout.write(text)
    return 0


def cmd_eval(args) -> int:
    feature_set = load_features(args.features)
    model, _ = load_linear_model(args.model)
    data = Dataset(features=feature_set.features, labels=feature_set.labels)
    accuracy = evaluate_accuracy(model, data)
    predicted = predict_labels(model, feature_set.features)
    scores = decision_scores(model, feature_set.features)

    print(f"samples: {data.n}")
    print(f"accuracy: {accuracy:.6f}")
    print("per-class accuracy:")
    aps = []
    for pos, cls in enumerate(model.classes):
        member = feature_set.labels == cls
        if member.any():
            class_acc = float(np.mean(predicted[member] == cls))
            print(f"  class {cls}: {class_acc:.6f} (n={int(member.sum())})")
            aps.append(average_precision(scores[:, pos], member))
        else:
            print(f"  class {cls}: n/a (n=0)")
    if aps:
        print(f"mAP: {float(np.mean(aps)):.6f}")
    else:
        print("mAP: n/a")
    return 0


def cmd_gmm_stats(args) -> int:
    model, _ = load_gmm(args.model)
    report = gmm_priors_report(model)
    print("rank\tcomponent\tweight\tcumulative_weight")
    cumulative = 0.0
    for rank, (index, weight) in enumerate(report, start=1):
        cumulative += weight
        print(f"{rank}\t{index}\t{weight:.9g}\t{cumulative:.9g}")
    return 0


def _add_config_flags(parser, *, scales: bool = False, svm: bool = False) -> None:
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--k", type=int, help="number of mixture components")
    parser.add_argument("--levels", type=int, choices=(1, 2),
                        help="pyramid levels (1: whole grid, 2: add quadrants "
                             "and centerpiece)")
    parser.add_argument("--normalization",
                        choices=[m.value for m in NormalizationMode],
                        help="per-grid descriptor normalization")
    parser.add_argument("--pca-dim", type=int, dest="pca_dim",
                        help="project descriptors to this dimensionality")
    parser.add_argument("--seed", type=int, help="seed for every random draw")
    if scales:
        parser.add_argument("--scales", type=float, nargs="+",
                            help="image scales to merge per image")
    if svm:
        parser.add_argument("--svm-c", type=float, dest="svm_c",
                            help="SVM regularization parameter C")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dspyramid",
        description="Fisher Vector spatial pyramid encoding over descriptor grids")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-gmm", help="fit the visual dictionary")
    p.add_argument("--manifest", required=True, help="grid manifest file")
    p.add_argument("--output", required=True, help="model JSON path")
    p.add_argument("--max-per-image", type=int, default=None,
                   help="subsample at most this many descriptors per grid")
    p.add_argument("--all-scales", action="store_true",
                   help="pool every manifest entry instead of scale-1.0 only")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train_gmm)

    p = sub.add_parser("encode", help="encode grids into feature vectors")
    p.add_argument("--manifest", required=True, help="grid manifest file")
    p.add_argument("--model", required=True, help="trained dictionary JSON")
    p.add_argument("--output", required=True, help="feature file path")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel image encoders (output order is unaffected)")
    _add_config_flags(p, scales=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train-svm", help="fit the one-vs-rest classifier")
    p.add_argument("--features", required=True, help="training feature file")
    p.add_argument("--output", required=True, help="classifier JSON path")
    _add_config_flags(p, svm=True)
    p.set_defaults(func=cmd_train_svm)

    p = sub.add_parser("predict", help="predicted label and scores per image")
    p.add_argument("--features", required=True, help="feature file")
    p.add_argument("--model", required=True, help="classifier JSON")
    p.add_argument("--output", help="write TSV here instead of stdout")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="accuracy and mAP report")
    p.add_argument("--features", required=True, help="feature file with labels")
    p.add_argument("--model", required=True, help="classifier JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gmm-stats", help="mixture weights, largest first")
    p.add_argument("--model", required=True, help="dictionary JSON")
    p.set_defaults(func=cmd_gmm_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DspError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
