"""Improved Fisher Vector encoding of descriptor sets under a GMM.

The encoding concatenates, per component k, the weighted mean and
variance gradients

    f_mu_k    = 1/sqrt(w_k)   * sum_t gamma_t(k) (x_t - mu_k) / sigma_k
    f_sigma_k = 1/sqrt(2 w_k) * sum_t gamma_t(k) [((x_t - mu_k)/sigma_k)^2 - 1]

laid out as [f_mu_1, f_sigma_1, ..., f_mu_K, f_sigma_K] (2dK entries).
The improved variant applies signed square-root then l2 normalization.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError
from .gmm import GmmModel, posteriors_matrix
from .validation import as_float_array, check_descriptors

# Posteriors below this are zeroed before accumulation; keeps denormals
# out of the sums at an effect far below test tolerances.
_GAMMA_TRUNCATION = 1e-12


def fv_encode(model: GmmModel, descriptors) -> np.ndarray:
    """Raw (un-normalized) Fisher Vector of a (T, d) descriptor set."""
    x = check_descriptors(descriptors)
    if x.shape[1] != model.d:
        raise ValidationError(
            f"descriptor dimensionality {x.shape[1]} does not match model ({model.d})")
    gamma = posteriors_matrix(model, x)  # (T, K)
    gamma[gamma < _GAMMA_TRUNCATION] = 0.0
    sigma = np.sqrt(model.variances)  # (K, d)
    diff = (x[:, None, :] - model.means[None, :, :]) / sigma[None, :, :]  # (T, K, d)
    mu_blocks = np.einsum("tk,tkd->kd", gamma, diff)
    mu_blocks /= np.sqrt(model.weights)[:, None]
    sigma_blocks = np.einsum("tk,tkd->kd", gamma, diff * diff - 1.0)
    sigma_blocks /= np.sqrt(2.0 * model.weights)[:, None]
    out = np.empty((model.n_components, 2, model.d))
    out[:, 0, :] = mu_blocks
    out[:, 1, :] = sigma_blocks
    return out.reshape(-1)


def power_normalize(vec) -> np.ndarray:
    """Elementwise signed square root: z -> sign(z) * sqrt(|z|)."""
    v = as_float_array(vec, "vector")
    return np.sign(v) * np.sqrt(np.abs(v))


def l2_normalize(vec) -> np.ndarray:
    """Scale to unit l2 norm; the zero vector stays zero."""
    v = as_float_array(vec, "vector")
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        return v.copy()
    return v / nrm


def improved_fv(model: GmmModel, descriptors) -> np.ndarray:
    """Fisher Vector with signed-square-root and l2 post-processing."""
    return l2_normalize(power_normalize(fv_encode(model, descriptors)))
