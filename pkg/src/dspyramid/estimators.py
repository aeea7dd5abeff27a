"""Estimator-style wrappers around the functional pipeline.

These follow the fit/transform/predict convention: constructor arguments
are stored untouched (so get_params round-trips), validation happens in
fit, and learned state lives in trailing-underscore attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .exceptions import ValidationError
from .gmm import GmmFitConfig, gmm_fit, log_likelihood, posteriors_matrix
from .grid import (DescriptorGrid, NormalizationMode, PcaModel, normalize,
                   pca_apply, pca_fit)
from .pyramid import build_layout, dsp_encode
from .svm import Dataset, decision_scores, predict_labels, svm_train
from .validation import as_float_array, check_count, check_descriptors


def _require_fitted(estimator, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit first")


def _as_grid_list(grids, name: str = "grids") -> list[DescriptorGrid]:
    if isinstance(grids, DescriptorGrid):
        return [grids]
    out = list(grids)
    if not out:
        raise ValidationError(f"{name} must contain at least one descriptor grid")
    for g in out:
        if not isinstance(g, DescriptorGrid):
            raise ValidationError(
                f"{name} must contain DescriptorGrid objects, got {type(g).__name__}")
    depths = {g.d for g in out}
    if len(depths) != 1:
        raise ValidationError(
            f"all grids must share one descriptor depth, got {sorted(depths)}")
    return out


class GridNormalizer(BaseEstimator, TransformerMixin):
    """Stateless per-grid normalization ("none", "vector" or "matrix")."""

    def __init__(self, mode: str = "matrix"):
        self.mode = mode

    def fit(self, X, y=None):
        NormalizationMode.from_string(self.mode)
        self.mode_ = NormalizationMode.from_string(self.mode)
        return self

    def transform(self, X):
        _require_fitted(self, "mode_")
        grids = _as_grid_list(X)
        return [normalize(g, self.mode_) for g in grids]


class DiagonalGaussianMixture(BaseEstimator):
    """Diagonal-covariance Gaussian mixture fitted by seeded EM."""

    def __init__(self, n_components: int = 2, max_iterations: int = 100,
                 tolerance: float = 1e-6, variance_floor_factor: float = 1e-4,
                 seed: int = 0):
        self.n_components = n_components
        self.max_iterations = max_iterations
        self.tolerance = tolerance
        self.variance_floor_factor = variance_floor_factor
        self.seed = seed

    def _config(self) -> GmmFitConfig:
        return GmmFitConfig(n_components=self.n_components,
                            max_iterations=self.max_iterations,
                            tolerance=self.tolerance,
                            variance_floor_factor=self.variance_floor_factor,
                            seed=self.seed)

    def fit(self, X, y=None):
        data = check_descriptors(X, name="X")
        model, history = gmm_fit(data, self._config(), track_history=True)
        self.model_ = model
        self.weights_ = model.weights
        self.means_ = model.means
        self.variances_ = model.variances
        self.log_likelihood_history_ = history
        self.n_iter_ = len(history)
        return self

    def predict_proba(self, X) -> np.ndarray:
        _require_fitted(self, "model_")
        data = check_descriptors(X, d=self.model_.d, name="X")
        return posteriors_matrix(self.model_, data)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def score(self, X, y=None) -> float:
        """Average per-sample log-likelihood."""
        _require_fitted(self, "model_")
        data = check_descriptors(X, d=self.model_.d, name="X")
        return log_likelihood(self.model_, data) / data.shape[0]


class DspEncoder(BaseEstimator, TransformerMixin):
    """Whole pipeline from descriptor grids to fixed-length image vectors.

    fit pools cell descriptors from the training grids (optionally PCA
    projected, then normalized) and estimates the mixture; transform
    encodes each grid as a spatial pyramid of improved Fisher Vectors.
    """

    def __init__(self, n_components: int = 2, levels: int = 2,
                 normalization: str = "matrix", pca_dim: int | None = None,
                 max_cells_per_grid: int | None = None,
                 gmm_max_iterations: int = 100, gmm_tolerance: float = 1e-6,
                 seed: int = 0):
        self.n_components = n_components
        self.levels = levels
        self.normalization = normalization
        self.pca_dim = pca_dim
        self.max_cells_per_grid = max_cells_per_grid
        self.gmm_max_iterations = gmm_max_iterations
        self.gmm_tolerance = gmm_tolerance
        self.seed = seed

    def _prepare(self, grid: DescriptorGrid, pca: PcaModel | None) -> DescriptorGrid:
        if pca is not None:
            grid = pca_apply(pca, grid)
        return grid

    def fit(self, X, y=None):
        if self.levels not in (1, 2):
            raise ValidationError(f"levels must be 1 or 2, got {self.levels}")
        check_count(self.n_components, "n_components")
        if self.max_cells_per_grid is not None:
            check_count(self.max_cells_per_grid, "max_cells_per_grid")
        mode = NormalizationMode.from_string(self.normalization)
        grids = _as_grid_list(X)

        pca = None
        if self.pca_dim is not None:
            pooled_raw = np.vstack([g.values.reshape(-1, g.d) for g in grids])
            pca = pca_fit(pooled_raw, self.pca_dim)

        rng = np.random.default_rng(self.seed)
        pools = []
        for g in grids:
            cells = normalize(self._prepare(g, pca), mode).values.reshape(-1, g.d if pca is None else pca.q)
            if (self.max_cells_per_grid is not None
                    and cells.shape[0] > self.max_cells_per_grid):
                keep = rng.choice(cells.shape[0], size=self.max_cells_per_grid,
                                  replace=False)
                cells = cells[np.sort(keep)]
            pools.append(cells)
        pooled = np.vstack(pools)

        fit_config = GmmFitConfig(n_components=self.n_components,
                                  max_iterations=self.gmm_max_iterations,
                                  tolerance=self.gmm_tolerance, seed=self.seed)
        self.pca_ = pca
        self.gmm_ = gmm_fit(pooled, fit_config)
        self.mode_ = mode
        self._layouts_ = {}
        return self

    def _layout(self, h: int, w: int):
        key = (h, w)
        if key not in self._layouts_:
            self._layouts_[key] = build_layout(h, w, levels=self.levels)
        return self._layouts_[key]

    def encode_grid(self, grid: DescriptorGrid) -> np.ndarray:
        """Encode a single grid into one feature vector."""
        _require_fitted(self, "gmm_")
        prepared = self._prepare(grid, self.pca_)
        return dsp_encode(prepared, self.gmm_,
                          self._layout(prepared.h, prepared.w), mode=self.mode_)

    def transform(self, X) -> np.ndarray:
        grids = _as_grid_list(X)
        return np.vstack([self.encode_grid(g) for g in grids])

    @property
    def feature_dim_(self) -> int:
        _require_fitted(self, "gmm_")
        regions = 1 if self.levels == 1 else 6
        return 2 * self.gmm_.d * self.gmm_.n_components * regions


class OneVsRestLinearSvm(BaseEstimator, ClassifierMixin):
    """One-vs-rest linear SVM trained by seeded dual coordinate descent."""

    def __init__(self, c: float = 1.0, gap_tolerance: float = 1e-4,
                 max_epochs: int = 1000, seed: int = 0):
        self.c = c
        self.gap_tolerance = gap_tolerance
        self.max_epochs = max_epochs
        self.seed = seed

    def fit(self, X, y):
        data = Dataset(features=as_float_array(X, "X"),
                       labels=np.asarray(y))
        self.model_ = svm_train(data, c=self.c, gap_tolerance=self.gap_tolerance,
                                max_epochs=self.max_epochs, seed=self.seed)
        self.classes_ = np.asarray(self.model_.classes)
        self.coef_ = self.model_.weights
        self.intercept_ = self.model_.biases
        return self

    def decision_function(self, X) -> np.ndarray:
        _require_fitted(self, "model_")
        return decision_scores(self.model_, X)

    def predict(self, X) -> np.ndarray:
        _require_fitted(self, "model_")
        return predict_labels(self.model_, X)
