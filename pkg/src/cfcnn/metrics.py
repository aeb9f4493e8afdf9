"""Inconsistency and diversity of filter receptive fields, and curves over tau."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from .types import (
    ActivationBatch,
    ConceptMaskSet,
    Curve,
    CurvePoint,
    ReceptiveFieldStack,
    ValidationError,
)

DEFAULT_GAMMA = 0.2


@dataclass(frozen=True)
class ConceptProbabilities:
    """Concept association of one filter; ``p`` is None when the RF is empty everywhere."""

    p: Optional[np.ndarray]
    filter_index: int = 0

    @property
    def defined(self) -> bool:
        return self.p is not None


def project_rf(batch: ActivationBatch, image_shape) -> ReceptiveFieldStack:
    """Bilinearly upsample each feature map to image resolution.

    Returns ``raw`` of shape ``[n, d, H*W]``. Bilinear weights are convex, so
    the result stays nonnegative and never exceeds the map's maximum.
    """
    H, W = (image_shape, image_shape) if np.isscalar(image_shape) else image_shape
    h, w = batch.spatial_shape
    n, d, _ = batch.values.shape
    x = torch.as_tensor(np.asarray(batch.values, dtype=np.float32)).reshape(n, d, h, w)
    if (h, w) != (H, W):
        x = F.interpolate(x, size=(H, W), mode="bilinear", align_corners=False)
    raw = x.reshape(n, d, H * W).numpy()
    return ReceptiveFieldStack(np.maximum(raw, 0.0), image_shape=(H, W))


def threshold_rf(stack: ReceptiveFieldStack, tau: float) -> ReceptiveFieldStack:
    """Binary RF: a pixel is valid iff its projected activation is ``>= tau``."""
    return ReceptiveFieldStack(stack.raw, stack.raw >= tau, float(tau), stack.image_shape)


def _check_masks(binary, masks: ConceptMaskSet):
    if binary.shape[0] != masks.n_images or binary.shape[-1] != masks.M:
        raise ValidationError(
            f"RF shape {binary.shape} does not match masks (n={masks.n_images}, M={masks.M})"
        )


def concept_probabilities(binary, masks: ConceptMaskSet, filter_index: int = 0) -> ConceptProbabilities:
    """``P_j`` for one filter from its binary RFs ``[n, M]``."""
    binary = np.asarray(binary).astype(bool)
    _check_masks(binary, masks)
    denom = binary.sum()
    if denom == 0:
        return ConceptProbabilities(None, filter_index)
    num = np.einsum("nu,ntu->t", binary.astype(np.int64), masks.masks.astype(np.int64))
    return ConceptProbabilities(num / denom, filter_index)


def concept_probability_matrix(binary, masks: ConceptMaskSet):
    """All filters at once: ``(P [d, T], defined [d])`` from binary RFs ``[n, d, M]``.

    Rows of undefined filters are NaN.
    """
    binary = np.asarray(binary).astype(bool)
    _check_masks(binary, masks)
    denom = binary.sum(axis=(0, 2))
    num = np.zeros((binary.shape[1], masks.T))
    g = masks.masks.astype(np.float32)
    for i in range(binary.shape[0]):
        num += binary[i].astype(np.float32) @ g[i].T
    defined = denom > 0
    p = np.full_like(num, np.nan)
    p[defined] = num[defined] / denom[defined, None]
    return p, defined


def inconsistency(p) -> float:
    """Natural-log entropy of a concept distribution; zero terms contribute 0."""
    if isinstance(p, ConceptProbabilities):
        if not p.defined:
            raise ValidationError(f"filter {p.filter_index} has an undefined concept distribution")
        p = p.p
    p = np.asarray(p, dtype=float)
    if np.any(np.isnan(p)):
        raise ValidationError("undefined concept distribution")
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum()) + 0.0


def entropies(P) -> np.ndarray:
    """Row-wise entropy of ``[d, T]`` probabilities; NaN rows stay NaN."""
    P = np.asarray(P, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(np.where(P > 0, P, 1.0)), 0.0)
    h = -terms.sum(axis=1)
    h[np.isnan(P).any(axis=1)] = np.nan
    return h


def diversity(binary, gamma: float = DEFAULT_GAMMA) -> float:
    """Mean fraction of pixels covered by at least a ``gamma`` share of filters.

    ``binary`` is ``[n, d, M]``.
    """
    binary = np.asarray(binary).astype(bool)
    n, d, M = binary.shape
    share = binary.sum(axis=1) / d
    return float((share >= gamma).sum() / n / M)


def min_filters(d: int, gamma: float) -> int:
    """Smallest filter count ``c`` with ``c / d >= gamma``."""
    for c in range(d + 1):
        if c / d >= gamma:
            return c
    return d + 1


class _DiversityIndex:
    """Diversity as a function of tau, via the per-pixel order statistic.

    A pixel is explained iff the ``c``-th largest activation over filters is
    ``>= tau``, where ``c = min_filters(d, gamma)``.
    """

    def __init__(self, raw, gamma):
        n, d, M = raw.shape
        self.n, self.M = n, M
        c = min_filters(d, gamma)
        if c == 0:
            self.level = np.full(n * M, np.inf)
        elif c > d:
            self.level = np.full(n * M, -np.inf)
        else:
            self.level = -np.partition(-raw, c - 1, axis=1)[:, c - 1, :].ravel()
        self.level = np.sort(self.level)

    def __call__(self, tau) -> float:
        below = np.searchsorted(self.level, tau, side="left")
        return float((self.level.size - below) / self.n / self.M)


def curve_point(stack: ReceptiveFieldStack, masks: ConceptMaskSet, tau: float, gamma=DEFAULT_GAMMA) -> CurvePoint:
    binary = stack.raw >= tau
    p, defined = concept_probability_matrix(binary, masks)
    h = entropies(p)[defined]
    mean_h = float(h.mean()) if h.size else float("nan")
    return CurvePoint(float(tau), diversity(binary, gamma), mean_h, int(defined.sum()))


def _bisect(div, target, hi, tol, iters):
    lo = 0.0  # diversity(0) == 1 since raw >= 0
    d_lo, d_hi = div(lo), div(hi)
    best = min(((abs(d_lo - target), lo), (abs(d_hi - target), hi)))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        dm = div(mid)
        best = min(best, (abs(dm - target), mid))
        if abs(dm - target) <= tol:
            return mid, dm
        if dm >= target:
            lo = mid
        else:
            hi = mid
    return best[1], div(best[1])


def sample_curve(stack: ReceptiveFieldStack, masks: ConceptMaskSet, n_points: int = 20,
                 gamma: float = DEFAULT_GAMMA, tol: float = 0.02, max_iter: int = 40) -> Curve:
    """Inconsistency-diversity curve with diversities near ``k / n_points``.

    For each target a bisection on tau (at most ``max_iter`` steps over
    ``[0, max raw]``) looks for a diversity within ``tol``. Targets that cannot
    be hit, e.g. when diversity jumps in steps, set ``truncated``; the closest
    achievable level is kept if it is not already on the curve.
    """
    if n_points < 2:
        raise ValidationError("n_points must be >= 2")
    raw = stack.raw
    div = _DiversityIndex(raw, gamma)
    hi = float(np.nextafter(raw.max(), np.inf)) if raw.size else 1.0
    truncated = False
    found = {}
    for k in range(1, n_points + 1):
        target = k / n_points
        tau, dv = _bisect(div, target, hi, tol, max_iter)
        if abs(dv - target) > tol:
            truncated = True
        if dv <= 0:
            continue
        if dv not in found or tau > found[dv]:
            found[dv] = tau
    points = [curve_point(stack, masks, found[dv], gamma) for dv in sorted(found)]
    # diversity non-increasing in tau: keep strictly monotone pairs only
    kept = []
    for p in points:
        if kept and (p.diversity <= kept[-1].diversity or p.tau >= kept[-1].tau):
            continue
        kept.append(p)
    return Curve(kept, truncated)


def shuffle_baseline(batch: ActivationBatch, seed: int = 0) -> ActivationBatch:
    """Permute the image axis independently per filter."""
    v = np.asarray(batch.values)
    n = v.shape[0]
    if n < 2:
        raise ValidationError(f"need n >= 2 images to shuffle, got {n}")
    rng = np.random.default_rng(seed)
    out = np.empty_like(v)
    for i in range(v.shape[1]):
        out[:, i] = v[rng.permutation(n), i]
    return ActivationBatch(out, batch.image_ids, batch.layer_name, batch.spatial_shape)


def mean_inconsistency_between(curves, lo=0.4, hi=0.8, step=0.05) -> float:
    """Average inconsistency over a diversity window, interpolated on a grid."""
    grid = np.arange(lo, hi + 1e-9, step)
    return float(np.mean([c.at(grid) for c in curves]))
