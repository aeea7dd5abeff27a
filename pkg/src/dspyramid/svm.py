"""One-vs-rest linear SVM training, prediction and ranking evaluation.

Each binary problem minimizes 0.5 ||w||^2 + C sum_i max(0, 1 - y_i w.x_i)
by dual coordinate descent with seeded per-epoch shuffling, stopping on
the duality gap. The bias is learned through an appended constant-1
feature.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import FormatError, ValidationError
from .validation import as_float_array, check_positive, check_vector

MODEL_VERSION = 1

_DEFAULT_GAP_TOL = 1e-4
_DEFAULT_MAX_EPOCHS = 1000


@dataclass(frozen=True)
class Dataset:
    """Features with integer class labels (or a binary relevance matrix)."""

    features: np.ndarray
    labels: np.ndarray
    class_names: dict | None = None

    def __post_init__(self):
        features = as_float_array(self.features, "features")
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValidationError(f"features must be (n, D) with n >= 1, "
                                  f"got shape {features.shape}")
        labels = np.asarray(self.labels)
        if labels.ndim == 1:
            labels = labels.astype(np.int64)
        elif labels.ndim == 2:
            if not np.isin(labels, (0, 1)).all():
                raise ValidationError("a 2-D label matrix must be binary")
            labels = labels.astype(np.int64)
        else:
            raise ValidationError(f"labels must be 1-D ids or a 2-D binary "
                                  f"matrix, got shape {labels.shape}")
        if labels.shape[0] != features.shape[0]:
            raise ValidationError(
                f"{features.shape[0]} feature rows but {labels.shape[0]} labels")
        names = self.class_names
        if names is None:
            ids = (np.unique(labels) if labels.ndim == 1
                   else np.arange(labels.shape[1]))
            names = {int(i): str(int(i)) for i in ids}
        else:
            ids = np.unique(labels) if labels.ndim == 1 else range(labels.shape[1])
            missing = [int(i) for i in ids if int(i) not in names]
            if missing:
                raise ValidationError(f"label ids without a class name: {missing}")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", dict(names))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class LinearModel:
    """Per-class weight vectors and biases of a one-vs-rest classifier."""

    classes: tuple[int, ...]
    weights: np.ndarray
    biases: np.ndarray
    c: float = 1.0
    gap_tolerance: float = _DEFAULT_GAP_TOL
    max_epochs: int = _DEFAULT_MAX_EPOCHS
    seed: int = 0

    def __post_init__(self):
        weights = as_float_array(self.weights, "weights")
        biases = as_float_array(self.biases, "biases")
        classes = tuple(int(c) for c in self.classes)
        if weights.ndim != 2 or biases.ndim != 1 \
                or weights.shape[0] != len(classes) or biases.shape[0] != len(classes):
            raise ValidationError(
                f"inconsistent model shapes: {len(classes)} classes, "
                f"weights {weights.shape}, biases {biases.shape}")
        weights.setflags(write=False)
        biases.setflags(write=False)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def _dual_cd_binary(x: np.ndarray, y: np.ndarray, c: float, gap_tol: float,
                    max_epochs: int, rng: np.random.Generator) -> np.ndarray:
    """L1-hinge dual coordinate descent; returns the augmented weight vector."""
    n = x.shape[0]
    alpha = np.zeros(n)
    w = np.zeros(x.shape[1])
    q_diag = np.einsum("ij,ij->i", x, x)
    for _ in range(max_epochs):
        for i in rng.permutation(n):
            if q_diag[i] == 0.0:
                continue
            g = y[i] * (w @ x[i]) - 1.0
            if alpha[i] == 0.0:
                pg = min(g, 0.0)
            elif alpha[i] == c:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg != 0.0:
                old = alpha[i]
                alpha[i] = min(max(old - g / q_diag[i], 0.0), c)
                w += (alpha[i] - old) * y[i] * x[i]
        margins = 1.0 - y * (x @ w)
        primal = 0.5 * (w @ w) + c * np.sum(np.maximum(margins, 0.0))
        dual = alpha.sum() - 0.5 * (w @ w)
        if primal - dual <= gap_tol * max(1.0, abs(primal)):
            break
    return w


def svm_train(data: Dataset, c: float = 1.0, gap_tolerance: float = _DEFAULT_GAP_TOL,
              max_epochs: int = _DEFAULT_MAX_EPOCHS, seed: int = 0) -> LinearModel:
    """Train one binary SVM per class against the rest.

    Classes are processed in ascending id order and each binary problem
    draws its shuffling from its own seeded generator, so the model does
    not depend on training order and is bit-reproducible for a fixed
    seed.
    """
    check_positive(c, "C")
    if data.labels.ndim != 1:
        raise ValidationError("svm_train needs 1-D integer class labels")
    classes = np.unique(data.labels)
    if data.n < 2 or classes.size < 2:
        raise ValidationError("training needs at least two samples from "
                              "at least two distinct classes")
    augmented = np.hstack([data.features, np.ones((data.n, 1))])
    weights = np.empty((classes.size, data.dim))
    biases = np.empty(classes.size)
    for pos, cls in enumerate(classes):
        y = np.where(data.labels == cls, 1.0, -1.0)
        rng = np.random.default_rng([seed, pos])
        w_aug = _dual_cd_binary(augmented, y, c, gap_tolerance, max_epochs, rng)
        weights[pos] = w_aug[:-1]
        biases[pos] = w_aug[-1]
    return LinearModel(classes=tuple(int(v) for v in classes), weights=weights,
                       biases=biases, c=float(c), gap_tolerance=gap_tolerance,
                       max_epochs=max_epochs, seed=seed)


def decision_scores(model: LinearModel, features) -> np.ndarray:
    """(n, n_classes) matrix of w_c . x + b_c."""
    x = as_float_array(features, "features")
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != model.dim:
        raise ValidationError(
            f"feature dimensionality {x.shape[1]} does not match model ({model.dim})")
    return x @ model.weights.T + model.biases


def predict(model: LinearModel, feature) -> tuple[int, np.ndarray]:
    """Predicted class id and per-class scores for one feature vector.

    Ties go to the lowest class id.
    """
    vec = check_vector(feature, d=model.dim, name="feature")
    scores = decision_scores(model, vec.reshape(1, -1))[0]
    return model.classes[int(np.argmax(scores))], scores


def predict_labels(model: LinearModel, features) -> np.ndarray:
    """Vectorized argmax prediction (ties to the lowest class id)."""
    scores = decision_scores(model, features)
    return np.asarray(model.classes)[np.argmax(scores, axis=1)]


def evaluate_accuracy(model: LinearModel, data: Dataset) -> float:
    """Fraction of samples whose argmax prediction matches the label."""
    if data.labels.ndim != 1:
        raise ValidationError("accuracy needs 1-D integer class labels")
    predicted = predict_labels(model, data.features)
    return float(np.mean(predicted == data.labels))


def average_precision(scores, relevance) -> float:
    """All-points average precision of one ranking.

    Items are ranked by descending score with ties kept in input order;
    AP is the mean, over the relevant items, of the precision at each
    relevant item's rank. The mean uses exact summation, so the result
    does not depend on any particular addition order.
    """
    s = check_vector(scores, name="scores")
    rel = np.asarray(relevance, dtype=bool)
    if rel.shape != s.shape:
        raise ValidationError(
            f"scores {s.shape} and relevance {rel.shape} differ in length")
    if not rel.any():
        raise ValidationError("average precision is undefined with no relevant items")
    order = np.argsort(-s, kind="stable")
    ranked = rel[order]
    hits = np.cumsum(ranked)
    precision_at = hits / np.arange(1, len(ranked) + 1)
    return math.fsum(precision_at[ranked].tolist()) / int(hits[-1])


def mean_average_precision(scores, relevance) -> float:
    """Unweighted mean of per-class AP over the columns of (n, L) inputs."""
    s = as_float_array(scores, "scores")
    rel = np.asarray(relevance, dtype=bool)
    if s.ndim != 2 or rel.shape != s.shape:
        raise ValidationError(
            f"expected matching (n, L) matrices, got {s.shape} and {rel.shape}")
    return float(np.mean([average_precision(s[:, j], rel[:, j])
                          for j in range(s.shape[1])]))


def save_linear_model(model: LinearModel, path, extra: dict | None = None) -> None:
    payload = {
        "version": MODEL_VERSION,
        "classes": list(model.classes),
        "weights": model.weights.tolist(),
        "biases": model.biases.tolist(),
        "C": model.c,
        "solver": {
            "gap_tolerance": model.gap_tolerance,
            "max_epochs": model.max_epochs,
            "seed": model.seed,
        },
    }
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_linear_model(path) -> tuple[LinearModel, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    try:
        if payload["version"] != MODEL_VERSION:
            raise FormatError(f"{path}: unsupported model version "
                              f"{payload['version']}")
        solver = payload.get("solver", {})
        model = LinearModel(
            classes=tuple(int(c) for c in payload["classes"]),
            weights=np.asarray(payload["weights"], dtype=np.float64),
            biases=np.asarray(payload["biases"], dtype=np.float64),
            c=float(payload["C"]),
            gap_tolerance=float(solver.get("gap_tolerance", _DEFAULT_GAP_TOL)),
            max_epochs=int(solver.get("max_epochs", _DEFAULT_MAX_EPOCHS)),
            seed=int(solver.get("seed", 0)),
        )
    except KeyError as exc:
        raise FormatError(f"{path}: missing field {exc}") from exc
    return model, payload
