"""Fisher Vector spatial pyramid encoding over convolutional descriptor grids.

The pipeline: load h x w x d descriptor grids, normalize them (spectral
norm by default), fit a small diagonal Gaussian mixture as the visual
dictionary, encode each grid region as an improved Fisher Vector over a
two-level spatial pyramid, merge per-scale vectors, and classify with
one-vs-rest linear SVMs.
"""

from .config import PipelineConfig, load_config, save_config
from .estimators import (DiagonalGaussianMixture, DspEncoder, GridNormalizer,
                         OneVsRestLinearSvm)
from .exceptions import (CorruptionError, DegenerateInputError, DspError,
                         FormatError, ValidationError)
from .fisher import fv_encode, improved_fv, l2_normalize, power_normalize
from .formats import (FeatureSet, ManifestEntry, atomic_write, group_by_image,
                      load_features, load_manifest, save_features)
from .gmm import (GmmFitConfig, GmmModel, gmm_fit, gmm_priors_report, load_gmm,
                  log_likelihood, posteriors, posteriors_matrix, save_gmm)
from .grid import (DescriptorGrid, NormalizationMode, PcaModel, load_grid,
                   normalize, pca_apply, pca_fit, save_grid, spectral_norm)
from .multiscale import DEFAULT_SCALES, check_scales, merge_scales
from .pyramid import PyramidLayout, Region, build_layout, dsp_encode, partition
from .svm import (Dataset, LinearModel, average_precision, decision_scores,
                  evaluate_accuracy, load_linear_model, mean_average_precision,
                  predict, predict_labels, save_linear_model, svm_train)

__version__ = "0.1.0"

__all__ = [
    "CorruptionError",
    "DEFAULT_SCALES",
    "Dataset",
    "DegenerateInputError",
    "DescriptorGrid",
    "DiagonalGaussianMixture",
    "DspEncoder",
    "DspError",
    "FeatureSet",
    "FormatError",
    "GmmFitConfig",
    "GmmModel",
    "GridNormalizer",
    "LinearModel",
    "ManifestEntry",
    "NormalizationMode",
    "OneVsRestLinearSvm",
    "PcaModel",
    "PipelineConfig",
    "PyramidLayout",
    "Region",
    "ValidationError",
    "atomic_write",
    "average_precision",
    "build_layout",
    "check_scales",
    "decision_scores",
    "dsp_encode",
    "evaluate_accuracy",
    "fv_encode",
    "gmm_fit",
    "gmm_priors_report",
    "group_by_image",
    "improved_fv",
    "l2_normalize",
    "load_config",
    "load_features",
    "load_grid",
    "load_gmm",
    "load_linear_model",
    "load_manifest",
    "log_likelihood",
    "mean_average_precision",
    "merge_scales",
    "normalize",
    "partition",
    "pca_apply",
    "pca_fit",
    "posteriors",
    "posteriors_matrix",
    "power_normalize",
    "predict",
    "predict_labels",
    "save_config",
    "save_features",
    "save_grid",
    "save_gmm",
    "save_linear_model",
    "spectral_norm",
    "svm_train",
]
