"""Diagonal-covariance Gaussian mixtures fit by EM.

The mixture supplies the soft assignments and priors consumed by the
Fisher Vector encoder. All density math runs in the log domain; with
512-dimensional descriptors, linear-domain densities underflow.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .exceptions import CorruptionError, FormatError, ValidationError
from .validation import check_count, check_descriptors, check_positive, check_vector

MODEL_VERSION = 1

# A component whose total soft mass falls below this fraction of T is
# re-seeded instead of being allowed to collapse into NaNs.
_DEGENERATE_MASS_FRACTION = 1e-8
# Absolute lower bound that keeps the variance floor strictly positive
# even when the data is constant along some dimension.
_FLOOR_EPSILON = 1e-12

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GmmFitConfig:
    """EM controls. ``tolerance`` is the relative log-likelihood change."""

    n_components: int = 2
    max_iterations: int = 100
    tolerance: float = 1e-6
    variance_floor_factor: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        check_count(self.n_components, "n_components")
        check_count(self.max_iterations, "max_iterations")
        check_positive(self.tolerance, "tolerance")
        check_positive(self.variance_floor_factor, "variance_floor_factor")
        if int(self.seed) < 0:
            raise ValidationError("seed must be a non-negative integer")

    def to_dict(self) -> dict:
        return {
            "K": self.n_components,
            "max_iterations": self.max_iterations,
            "tolerance": self.tolerance,
            "variance_floor_factor": self.variance_floor_factor,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GmmFitConfig":
        return cls(
            n_components=int(payload["K"]),
            max_iterations=int(payload["max_iterations"]),
            tolerance=float(payload["tolerance"]),
            variance_floor_factor=float(payload["variance_floor_factor"]),
            seed=int(payload["seed"]),
        )


@dataclass(frozen=True)
class GmmModel:
    """Mixture parameters: weights (K,), means (K, d), variances (K, d)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    fit_config: GmmFitConfig | None = field(default=None, compare=False)

    def __post_init__(self):
        weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        means = np.ascontiguousarray(self.means, dtype=np.float64)
        variances = np.ascontiguousarray(self.variances, dtype=np.float64)
        if weights.ndim != 1 or means.ndim != 2 or variances.shape != means.shape \
                or means.shape[0] != weights.shape[0]:
            raise ValidationError(
                f"inconsistent mixture shapes: weights {weights.shape}, "
                f"means {means.shape}, variances {variances.shape}")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(means))
                and np.all(np.isfinite(variances))):
            raise ValidationError("mixture parameters contain NaN or Inf")
        if np.any(weights <= 0.0):
            raise ValidationError("every mixture weight must be > 0")
        if abs(float(weights.sum()) - 1.0) > 1e-10:
            raise ValidationError(f"mixture weights sum to {weights.sum()}, not 1")
        if np.any(variances <= 0.0):
            raise ValidationError("every variance entry must be > 0")
        for arr in (weights, means, variances):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]


def _component_log_densities(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """(T, K) matrix of log N(x_t; mu_k, diag(var_k))."""
    log_det = np.sum(np.log(model.variances), axis=1)  # (K,)
    diff = x[:, None, :] - model.means[None, :, :]  # (T, K, d)
    maha = np.sum(diff * diff / model.variances[None, :, :], axis=2)  # (T, K)
    return -0.5 * (model.d * _LOG_2PI + log_det[None, :] + maha)


def _log_joint(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """(T, K) matrix of log(w_k) + log N(x_t; mu_k, diag(var_k))."""
    return np.log(model.weights)[None, :] + _component_log_densities(model, x)


def posteriors_matrix(model: GmmModel, descriptors) -> np.ndarray:
    """Soft assignments gamma_t(k) for a (T, d) descriptor matrix.

    Each row sums to 1; computed with log-sum-exp for stability.
    """
    x = check_descriptors(descriptors, d=model.d)
    logj = _log_joint(model, x)
    return np.exp(logj - logsumexp(logj, axis=1, keepdims=True))


def posteriors(model: GmmModel, x) -> np.ndarray:
    """Soft assignment of one descriptor to the K components."""
    vec = check_vector(x, d=model.d, name="descriptor")
    return posteriors_matrix(model, vec.reshape(1, -1))[0]


def log_likelihood(model: GmmModel, descriptors) -> float:
    """Total mixture log-likelihood sum_t log sum_k w_k N(x_t; ...).

    The per-descriptor terms are combined with an exact summation, so the
    value is invariant to descriptor order bit-for-bit.
    """
    x = check_descriptors(descriptors, name="descriptors")
    if x.shape[1] != model.d:
        raise ValidationError(
            f"descriptor dimensionality {x.shape[1]} does not match model ({model.d})")
    per_point = logsumexp(_log_joint(model, x), axis=1)
    return math.fsum(per_point.tolist())


def _kmeans_plus_plus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[int(rng.integers(n))]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))  # all points coincide with a chosen center
        centers[j] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))
    return centers


def _lloyd_iterations(x: np.ndarray, centers: np.ndarray, iters: int) -> np.ndarray:
    """Hard k-means assignments after ``iters`` Lloyd updates."""
    for _ in range(iters):
        d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        assign = np.argmin(d2, axis=1)
        for j in range(centers.shape[0]):
            mask = assign == j
            if np.any(mask):
                centers[j] = x[mask].mean(axis=0)
            else:
                # Re-seed an empty cluster on the point farthest from its center.
                far = int(np.argmax(np.min(d2, axis=1)))
                centers[j] = x[far]
                d2[far] = 0.0
    d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    return np.argmin(d2, axis=1)


def _initial_model(x: np.ndarray, config: GmmFitConfig,
                   floor: np.ndarray) -> GmmModel:
    rng = np.random.default_rng(config.seed)
    k, n = config.n_components, x.shape[0]
    centers = _kmeans_plus_plus(x, k, rng)
    assign = _lloyd_iterations(x, centers, iters=10)
    weights = np.empty(k)
    means = np.empty((k, x.shape[1]))
    variances = np.empty((k, x.shape[1]))
    for j in range(k):
        mask = assign == j
        count = int(mask.sum())
        if count == 0:
            # Possible only when every remaining point duplicates another
            # cluster's center; fall back to the global statistics.
            weights[j] = 1.0
            means[j] = x.mean(axis=0)
            variances[j] = np.maximum(x.var(axis=0), floor)
            continue
        weights[j] = count
        means[j] = x[mask].mean(axis=0)
        variances[j] = np.maximum(x[mask].var(axis=0), floor)
    weights /= weights.sum()
    return GmmModel(weights=weights, means=means, variances=variances,
                    fit_config=config)


def gmm_fit(descriptors, config: GmmFitConfig = GmmFitConfig(),
            track_history: bool = False):
    """Fit a diagonal-covariance GMM by EM.

    Initialization is k-means++ seeding followed by 10 k-means
    iterations; the variance floor is ``variance_floor_factor`` times the
    global per-dimension variance. With ``track_history=True`` also
    returns the per-iteration log-likelihood trace.
    """
    x = check_descriptors(descriptors)
    k = config.n_components
    if x.shape[0] < k:
        raise ValidationError(
            f"need at least {k} descriptors to fit {k} components, got {x.shape[0]}")
    floor = np.maximum(config.variance_floor_factor * x.var(axis=0), _FLOOR_EPSILON)
    model = _initial_model(x, config, floor)

    global_var = np.maximum(x.var(axis=0), floor)
    history: list[float] = []
    prev_ll = -np.inf
    n = x.shape[0]
    for _ in range(config.max_iterations):
        logj = _log_joint(model, x)
        log_norm = logsumexp(logj, axis=1)
        ll = float(np.sum(log_norm))
        history.append(ll)
        if np.isfinite(prev_ll) and \
                abs(ll - prev_ll) <= config.tolerance * max(1.0, abs(prev_ll)):
            break
        prev_ll = ll

        gamma = np.exp(logj - log_norm[:, None])  # (T, K)
        mass = gamma.sum(axis=0)
        means = np.empty_like(model.means)
        variances = np.empty_like(model.variances)
        for j in range(k):
            if mass[j] < _DEGENERATE_MASS_FRACTION * n:
                # Re-seed a starved component on the worst-explained point.
                means[j] = x[int(np.argmin(log_norm))]
                variances[j] = global_var
                mass[j] = 1.0
                continue
            means[j] = gamma[:, j] @ x / mass[j]
            second = gamma[:, j] @ (x * x) / mass[j]
            variances[j] = np.maximum(second - means[j] ** 2, floor)
        weights = mass / mass.sum()
        model = GmmModel(weights=weights, means=means, variances=variances,
                         fit_config=config)

    if track_history:
        return model, np.asarray(history)
    return model


def gmm_priors_report(model: GmmModel) -> list[tuple[int, float]]:
    """Component priors sorted descending, as (component-index, weight)."""
    order = np.argsort(-model.weights, kind="stable")
    return [(int(i), float(model.weights[i])) for i in order]


def save_gmm(model: GmmModel, path, extra: dict | None = None) -> None:
    """Write the mixture as JSON (full double-precision round trip)."""
    payload = {
        "version": MODEL_VERSION,
        "K": model.n_components,
        "d": model.d,
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "variances": model.variances.tolist(),
    }
    if model.fit_config is not None:
        payload["fit_config"] = model.fit_config.to_dict()
        payload["seed"] = model.fit_config.seed
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_gmm(path) -> tuple[GmmModel, dict]:
    """Read a mixture JSON; returns the model and the raw document."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    try:
        version = payload["version"]
        if version != MODEL_VERSION:
            raise FormatError(f"{path}: unsupported model version {version}")
        config = None
        if payload.get("fit_config") is not None:
            config = GmmFitConfig.from_dict(payload["fit_config"])
        model = GmmModel(
            weights=np.asarray(payload["weights"], dtype=np.float64),
            means=np.asarray(payload["means"], dtype=np.float64),
            variances=np.asarray(payload["variances"], dtype=np.float64),
            fit_config=config,
        )
    except KeyError as exc:
        raise FormatError(f"{path}: missing field {exc}") from exc
    if model.n_components != payload["K"] or model.d != payload["d"]:
        raise CorruptionError(
            f"{path}: declared K={payload['K']}, d={payload['d']} but arrays "
            f"have K={model.n_components}, d={model.d}")
    return model, payload
