"""Filter partitioning by normalized-cut spectral clustering."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from .types import FilterPartition, ValidationError, make_partition


@dataclass(frozen=True)
class NcutResult:
    partition: FilterPartition
    ncut_value: float
    eigenvalues: np.ndarray


def _matrix(S) -> np.ndarray:
    return np.asarray(getattr(S, "entries", S), dtype=float)


def ncut_objective(S, partition: FilterPartition) -> float:
    """``1/2 sum_k cut(A_k, rest) / assoc(A_k, all)``.

    Equal to ``(group_loss + K) / 2`` for the same matrix and partition.
    """
    S = _matrix(S)
    if S.shape != (partition.d, partition.d):
        raise ValidationError(f"similarity is {S.shape}, partition covers {partition.d} filters")
    h = partition.indicator()
    assoc = S.sum(axis=1) @ h
    within = np.einsum("ik,ij,jk->k", h, S, h)
    return float(0.5 * np.sum((assoc - within) / assoc))


def spectral_embedding(S, K: int):
    """Eigenvectors of the random-walk Laplacian for the ``K`` smallest eigenvalues.

    Solved through the symmetric form ``D^-1/2 (D - S) D^-1/2``; returns
    ``(eigenvalues, rows)`` with rows of shape ``[d, K]``.
    """
    S = _matrix(S)
    deg = S.sum(axis=1)
    if np.any(deg <= 0):
        raise ValidationError("similarity has a row with zero degree")
    inv_sqrt = 1.0 / np.sqrt(deg)
    lsym = np.eye(len(S)) - inv_sqrt[:, None] * S * inv_sqrt[None, :]
    lsym = 0.5 * (lsym + lsym.T)
    # eigh returns ascending eigenvalues; stable sort keeps index order on ties
    vals, vecs = np.linalg.eigh(lsym)
    order = np.argsort(vals, kind="stable")[:K]
    rows = inv_sqrt[:, None] * vecs[:, order]
    # fix eigenvector signs so the embedding is reproducible
    signs = np.sign(rows[np.argmax(np.abs(rows), axis=0), np.arange(K)])
    signs[signs == 0] = 1.0
    return vals[order], rows * signs


def _repair_empty(points, labels, centers, K):
    labels = labels.copy()
    for k in range(K):
        if np.any(labels == k):
            continue
        dist = np.linalg.norm(points - centers[labels], axis=1)
        # only donate from clusters that keep at least one member
        sizes = np.bincount(labels, minlength=K)
        dist[sizes[labels] <= 1] = -np.inf
        far = int(np.argmax(dist))
        if not np.isfinite(dist[far]):
            raise ValidationError(f"cannot repair empty cluster {k}")
        labels[far] = k
        centers = np.stack([points[labels == j].mean(axis=0) if np.any(labels == j) else centers[j]
                            for j in range(K)])
    # one reassignment pass, then give up if it empties a cluster again
    new = np.argmin(((points[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    if len(np.unique(new)) < K:
        raise ValidationError("k-means left an empty cluster after repair")
    return new


def spectral_partition(S, K: int, seed: int = 0) -> NcutResult:
    """K-way normalized-cut partition of the filters described by ``S``."""
    S = _matrix(S)
    d = S.shape[0]
    if K < 1 or K > d:
        raise ValidationError(f"need 1 <= K <= d, got K={K}, d={d}")
    if K == 1:
        part = FilterPartition((tuple(range(d)),))
        return NcutResult(part, ncut_objective(S, part), np.zeros(1))
    if K == d:
        part = FilterPartition(tuple((i,) for i in range(d)))
        return NcutResult(part, ncut_objective(S, part), spectral_embedding(S, K)[0])
    vals, rows = spectral_embedding(S, K)
    with warnings.catch_warnings():
        # fewer distinct rows than K is handled by the repair step
        warnings.simplefilter("ignore", ConvergenceWarning)
        km = KMeans(n_clusters=K, init="k-means++", n_init=10, max_iter=300, random_state=seed).fit(rows)
    labels = km.labels_
    if len(np.unique(labels)) < K:
        labels = _repair_empty(rows, labels, km.cluster_centers_, K)
    part = _canonical(labels, K)
    return NcutResult(part, ncut_objective(S, part), vals)


def _canonical(labels, K) -> FilterPartition:
    # relabel groups by first filter index so equal partitions compare equal
    order = {}
    for lab in labels:
        order.setdefault(int(lab), len(order))
    return make_partition([order[int(lab)] for lab in labels], K)


def update_partition(epoch_similarity, config, previous: FilterPartition | None = None) -> FilterPartition:
    """A-step: spectral partition, kept only if it does not raise the ncut."""
    S = _matrix(epoch_similarity)
    result = spectral_partition(S, config.num_groups, config.random_seed)
    if previous is not None and previous.K == result.partition.K:
        if result.ncut_value > ncut_objective(S, previous):
            return previous
    return result.partition
