"""Group interpretability loss, multi-category loss and the training objective."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from ._backend import as_like, namespace, unwrap
from .similarity import DEFAULT_EPS, group_activations, pairwise_similarity
from .types import FilterPartition, ValidationError


@dataclass(frozen=True)
class LossBreakdown:
    group_loss: object
    multi_loss: Optional[object]
    cls_loss: object
    total: object

    def item(self) -> dict:
        def f(v):
            return None if v is None else float(v)

        return {
            "group_loss": f(self.group_loss),
            "multi_loss": f(self.multi_loss),
            "cls_loss": f(self.cls_loss),
            "total": f(self.total),
        }


def _entries(S):
    return getattr(S, "entries", S)


def group_loss(S, partition: FilterPartition):
    """``-sum_k S_k^within / S_k^all`` for a fixed partition.

    Diagonal entries count towards ``S_k^within``. Returns a scalar of the
    same array type as ``S``; the partition carries no gradient.
    """
    S = _entries(S)
    if not isinstance(S, torch.Tensor):
        S = np.asarray(S, dtype=float)
    if S.shape != (partition.d, partition.d):
        raise ValidationError(f"similarity is {tuple(S.shape)}, partition covers {partition.d} filters")
    xp = namespace(S)
    h = as_like(S, partition.indicator())
    within = xp.einsum("ik,ij,jk->k", h, S, h)
    total = S.sum(axis=1) @ h
    assert bool((total > 0).all()), "a group has zero total similarity"
    return -(within / total).sum()


def multi_loss(Z, labels, C: int):
    """``-sum_c sum_{p,q in I_c} s_pq / sum_{p in I_c, q} s_pq`` with ``s_pq = z_p . z_q``.

    ``Z`` is ``[n, K]`` group activations, ``labels`` integer categories in
    ``[0, C)``. Every category must occur in the batch. A category whose
    activations are all zero contributes 0.
    """
    if not isinstance(Z, torch.Tensor):
        Z = np.asarray(Z, dtype=float)
    xp = namespace(Z)
    labels = np.asarray(labels.cpu() if isinstance(labels, torch.Tensor) else labels, dtype=int)
    if labels.shape != (Z.shape[0],):
        raise ValidationError("labels must have one entry per image")
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise ValidationError(f"labels must lie in [0, {C})")
    counts = np.bincount(labels, minlength=C)
    if np.any(counts == 0):
        raise ValidationError(f"categories {np.flatnonzero(counts == 0).tolist()} absent from batch")
    y = as_like(Z, np.eye(C)[labels])
    s = Z @ Z.T
    within = xp.einsum("pc,pq,qc->c", y, s, y)
    total = s.sum(axis=1) @ y
    pos = total > 0
    ratio = xp.where(pos, within / xp.where(pos, total, xp.ones_like(total)), xp.zeros_like(total))
    return -ratio.sum()


def classification_loss(logits, labels):
    """Mean softmax cross-entropy."""
    if isinstance(logits, torch.Tensor):
        return F.cross_entropy(logits, torch.as_tensor(labels, device=logits.device).long())
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=int)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return -logp[np.arange(len(labels)), labels].mean()


def compose_objective(group, cls, config, multi=None) -> LossBreakdown:
    """Weighted sum of loss terms according to ``config.task_mode``."""
    total = config.lambda_weight * group + cls
    if config.task_mode == "multi":
        if multi is None:
            raise ValidationError("multi mode needs a multi-category loss term")
        total = total + config.beta_weight * multi
    else:
        multi = None
    return LossBreakdown(group, multi, cls, total)


def total_objective(batch, partition, labels, logits, config, num_classes=None) -> LossBreakdown:
    x = unwrap(batch)
    S = pairwise_similarity(x, getattr(config, "epsilon_sigma", DEFAULT_EPS))
    g = group_loss(S, partition)
    cls = classification_loss(logits, labels)
    multi = None
    if config.task_mode == "multi":
        C = num_classes if num_classes is not None else int(np.max(np.asarray(labels))) + 1
        multi = multi_loss(group_activations(x, partition), labels, C)
    return compose_objective(g, cls, config, multi)
