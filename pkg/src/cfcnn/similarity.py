"""Filter-pair similarity on feature maps and the image-pair group kernel.

Functions accept an :class:`~cfcnn.types.ActivationBatch`, a numpy array or a
torch tensor of shape ``[n, d, m]`` and return the same array type, so the
torch path stays differentiable for training.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import as_like, namespace, unwrap
from .types import FilterPartition, ValidationError

DEFAULT_EPS = 1e-8


@dataclass(frozen=True)
class FilterMoments:
    mu: np.ndarray  # [d, m]
    sigma: np.ndarray  # [d]


def _centered(x):
    n = x.shape[0]
    if n < 2:
        raise ValidationError(f"need n >= 2 images, got {n}")
    mu = x.mean(0)
    return mu, x - mu


def _safe_sqrt(xp, v):
    # zero variance gives sigma = 0 with a finite (zero) gradient
    pos = v > 0
    return xp.where(pos, xp.sqrt(xp.where(pos, v, xp.ones_like(v))), xp.zeros_like(v))


def compute_moments(batch) -> FilterMoments:
    """Per-filter mean map and scalar standard deviation over images.

    ``sigma_i**2 = 1/(n-1) * sum_I ||x_i^I - mu_i||^2``, aggregated over all cells.
    """
    x = unwrap(batch)
    xp = namespace(x)
    mu, xc = _centered(x)
    var = (xc * xc).sum(axis=(0, 2)) / (x.shape[0] - 1)
    return FilterMoments(mu, _safe_sqrt(xp, var))


def covariance(batch):
    """``[d, d]`` matrix of ``1/(n-1) sum_I (x_i - mu_i)^T (x_j - mu_j)``."""
    x = unwrap(batch)
    xp = namespace(x)
    _, xc = _centered(x)
    return xp.einsum("nim,njm->ij", xc, xc) / (x.shape[0] - 1)


def similarity_from_covariance(cov, eps=DEFAULT_EPS):
    """Shifted Pearson kernel ``cov_ij / ((s_i+eps)(s_j+eps)) + 1`` from a covariance matrix."""
    xp = namespace(cov)
    var = xp.where(cov.diagonal() > 0, cov.diagonal(), xp.zeros_like(cov.diagonal()))
    sd = _safe_sqrt(xp, var) + eps
    s = cov / (sd[:, None] * sd[None, :]) + 1.0
    return 0.5 * (s + s.T)


def pairwise_similarity(batch, eps=DEFAULT_EPS):
    """Filter similarity ``s_ij = rho_ij + 1`` computed across images.

    A filter with zero variance has ``cov = 0`` against everything, so its
    entries come out as 1 (uncorrelated) instead of dividing by zero.
    """
    return similarity_from_covariance(covariance(batch), eps)


def embedding_similarity(batch, eps=DEFAULT_EPS) -> np.ndarray:
    """Same kernel written as ``sum_I phi(x_i^I)^T phi(x_j^I)``.

    ``phi(x) = [x - mu, sqrt(1 - 1/n) * sigma] / (sqrt(n - 1) * sigma)``, with
    ``sigma`` replaced by ``sigma + eps`` in both places. Used as a cross-check
    of :func:`pairwise_similarity`; numpy only.
    """
    x = np.asarray(unwrap(batch), dtype=float)
    n, d, m = x.shape
    mom = compute_moments(x)
    sd = mom.sigma + eps
    phi = np.empty((n, d, m + 1))
    phi[:, :, :m] = x - mom.mu
    phi[:, :, m] = np.sqrt(1.0 - 1.0 / n) * sd
    phi /= (np.sqrt(n - 1) * sd)[None, :, None]
    return np.einsum("nik,njk->ij", phi, phi)


def group_activations(batch, partition: FilterPartition):
    """Mean activation of each filter group per image, shape ``[n, K]``."""
    x = unwrap(batch)
    if partition.d != x.shape[1]:
        raise ValidationError(f"partition covers {partition.d} filters, batch has {x.shape[1]}")
    h = partition.indicator()
    h = h / h.sum(axis=0, keepdims=True)
    return x.mean(axis=2) @ as_like(x, h)


def image_pair_similarity(zp, zq) -> float:
    """Linear kernel between two group-activation vectors."""
    zp = np.asarray(zp, dtype=float)
    zq = np.asarray(zq, dtype=float)
    if zp.shape != zq.shape:
        raise ValidationError(f"dimension mismatch: {zp.shape} vs {zq.shape}")
    return float(zp @ zq)


class MomentAccumulator:
    """Streaming sums that reproduce the full-pass covariance exactly.

    Feed batches of ``[b, d, m]`` activations with :meth:`update`; the
    similarity over everything seen equals :func:`pairwise_similarity` on the
    concatenation (up to floating point).
    """

    def __init__(self, d: int, m: int):
        self.n = 0
        self.sum = np.zeros((d, m))
        self.gram = np.zeros((d, d))

    def update(self, values) -> None:
        x = np.asarray(values, dtype=float)
        self.n += x.shape[0]
        self.sum += x.sum(axis=0)
        self.gram += np.einsum("nim,njm->ij", x, x)

    def covariance(self) -> np.ndarray:
        if self.n < 2:
            raise ValidationError(f"need n >= 2 images, got {self.n}")
        mu = self.sum / self.n
        cov = (self.gram - self.n * mu @ mu.T) / (self.n - 1)
        # cancellation leaves roundoff-sized variance on constant filters
        scale = np.diagonal(self.gram) / (self.n - 1)
        dead = np.diagonal(cov) <= 1e-10 * np.maximum(scale, 1e-300)
        cov[dead, :] = 0.0
        cov[:, dead] = 0.0
        return cov

    def similarity(self, eps=DEFAULT_EPS) -> np.ndarray:
        return np.clip(similarity_from_covariance(self.covariance(), eps), 0.0, 2.0)
