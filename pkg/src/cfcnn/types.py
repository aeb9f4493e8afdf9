"""Shared domain types.

All array-valued fields are numpy arrays. Spatial axes are flattened in
row-major order everywhere: a feature map of shape ``(h, w)`` becomes ``m = h*w``
cells and an image of shape ``(H, W)`` becomes ``M = H*W`` pixels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class ValidationError(ValueError):
    """An input violates a documented invariant."""


@dataclass(frozen=True)
class ActivationBatch:
    """Post-ReLU feature maps of one layer, shape ``[n_images, d_filters, m]``."""

    values: np.ndarray
    image_ids: tuple = ()
    layer_name: str = ""
    spatial_shape: Optional[tuple] = None

    def __post_init__(self):
        values = np.asarray(self.values)
        object.__setattr__(self, "values", values)
        if values.ndim != 3:
            raise ValidationError(f"values must be [n, d, m], got shape {values.shape}")
        if not self.image_ids:
            object.__setattr__(self, "image_ids", tuple(str(i) for i in range(values.shape[0])))
        else:
            object.__setattr__(self, "image_ids", tuple(self.image_ids))
        if self.spatial_shape is None:
            side = math.isqrt(values.shape[2])
            if side * side == values.shape[2]:
                object.__setattr__(self, "spatial_shape", (side, side))
            else:
                object.__setattr__(self, "spatial_shape", (1, values.shape[2]))
        else:
            object.__setattr__(self, "spatial_shape", tuple(int(s) for s in self.spatial_shape))

    @property
    def n_images(self) -> int:
        return self.values.shape[0]

    @property
    def d_filters(self) -> int:
        return self.values.shape[1]

    @property
    def m_spatial(self) -> int:
        return self.values.shape[2]

    def validate(self) -> None:
        validate(self)


def validate(batch: ActivationBatch) -> None:
    """Raise :class:`ValidationError` if ``batch`` breaks an invariant."""
    v = batch.values
    if v.shape[0] < 2:
        raise ValidationError(f"need n >= 2 images, got {v.shape[0]}")
    if len(batch.image_ids) != v.shape[0]:
        raise ValidationError("image_ids length does not match n_images")
    if not np.all(np.isfinite(v)):
        raise ValidationError("non-finite activation (NaN or inf)")
    if np.any(v < 0):
        raise ValidationError(f"negative activation (min {v.min():.4g}); expected post-ReLU maps")
    h, w = batch.spatial_shape
    if h * w != v.shape[2]:
        raise ValidationError(f"spatial_shape {batch.spatial_shape} does not match m={v.shape[2]}")


@dataclass(frozen=True)
class FilterPartition:
    """A partition of filter indices ``0..d-1`` into ``K`` nonempty groups."""

    groups: tuple

    def __post_init__(self):
        groups = tuple(tuple(sorted(int(i) for i in g)) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if len(groups) < 1:
            raise ValidationError("partition needs K >= 1 groups")
        seen = set()
        for k, g in enumerate(groups):
            if not g:
                raise ValidationError(f"group {k} empty")
            overlap = seen.intersection(g)
            if overlap:
                raise ValidationError(f"groups overlap on filters {sorted(overlap)}")
            seen.update(g)
        if seen != set(range(len(seen))):
            raise ValidationError("groups do not cover 0..d-1")

    @property
    def K(self) -> int:
        return len(self.groups)

    @property
    def d(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def assignments(self) -> list:
        out = [0] * self.d
        for k, g in enumerate(self.groups):
            for i in g:
                out[i] = k
        return out

    def indicator(self) -> np.ndarray:
        """Float ``[d, K]`` membership matrix."""
        h = np.zeros((self.d, self.K))
        for k, g in enumerate(self.groups):
            h[list(g), k] = 1.0
        return h

    def same_grouping(self, other: "FilterPartition") -> bool:
        """Equality up to relabeling of the groups."""
        return sorted(self.groups) == sorted(other.groups)

    def to_json(self) -> list:
        return [list(g) for g in self.groups]


def make_partition(assignments: Sequence[int], K: int) -> FilterPartition:
    """Build a partition from per-filter group indices in ``[0, K)``."""
    assignments = [int(a) for a in assignments]
    if K < 1:
        raise ValidationError("K must be >= 1")
    for i, a in enumerate(assignments):
        if not 0 <= a < K:
            raise ValidationError(f"filter {i} assigned to group {a}, outside [0, {K})")
    groups = [[] for _ in range(K)]
    for i, a in enumerate(assignments):
        groups[a].append(i)
    for k, g in enumerate(groups):
        if not g:
            raise ValidationError(f"group {k} empty")
    return FilterPartition(tuple(tuple(g) for g in groups))


@dataclass(frozen=True)
class SimilarityMatrix:
    """Validated ``d x d`` filter similarity matrix with entries in ``[0, 2]``."""

    entries: np.ndarray
    atol: float = 1e-8

    def __post_init__(self):
        s = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", s)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValidationError(f"similarity must be square, got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValidationError("non-finite similarity entry")
        if np.max(np.abs(s - s.T), initial=0.0) > self.atol:
            raise ValidationError("similarity matrix not symmetric")
        if s.min(initial=0.0) < -self.atol or s.max(initial=0.0) > 2 + self.atol:
            raise ValidationError("similarity entries outside [0, 2]")

    @property
    def d(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class ConceptMaskSet:
    """Binary concept masks ``[n_images, T, M]``."""

    masks: np.ndarray
    concept_names: tuple
    partitioning: bool = True
    image_shape: Optional[tuple] = None

    def __post_init__(self):
        masks = np.asarray(self.masks)
        if masks.ndim != 3:
            raise ValidationError(f"masks must be [n, T, M], got {masks.shape}")
        if not np.isin(masks, (0, 1)).all():
            raise ValidationError("mask entries must be 0 or 1")
        masks = masks.astype(bool)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "concept_names", tuple(self.concept_names))
        if len(self.concept_names) != masks.shape[1]:
            raise ValidationError("concept_names length does not match T")
        if self.partitioning and not np.all(masks.sum(axis=1) == 1):
            raise ValidationError("partitioning masks must be disjoint and cover every pixel")
        if self.image_shape is not None:
            shape = tuple(int(s) for s in self.image_shape)
            object.__setattr__(self, "image_shape", shape)
            if shape[0] * shape[1] != masks.shape[2]:
                raise ValidationError("image_shape does not match M")

    @classmethod
    def from_label_maps(cls, label_maps, concept_names, image_shape=None):
        """One-hot encode integer label maps ``[n, H, W]`` (or ``[n, M]``)."""
        label_maps = np.asarray(label_maps)
        if image_shape is None and label_maps.ndim == 3:
            image_shape = label_maps.shape[1:]
        flat = label_maps.reshape(label_maps.shape[0], -1)
        T = len(concept_names)
        if flat.size and (flat.min() < 0 or flat.max() >= T):
            raise ValidationError("label value outside concept range")
        masks = flat[:, None, :] == np.arange(T)[None, :, None]
        return cls(masks, tuple(concept_names), True, image_shape)

    @property
    def n_images(self) -> int:
        return self.masks.shape[0]

    @property
    def T(self) -> int:
        return self.masks.shape[1]

    @property
    def M(self) -> int:
        return self.masks.shape[2]


@dataclass(frozen=True)
class ReceptiveFieldStack:
    """Projected activations ``raw`` ``[n, d, M]`` and their binary masks at ``tau``."""

    raw: np.ndarray
    binary: Optional[np.ndarray] = None
    tau: Optional[float] = None
    image_shape: Optional[tuple] = None

    def __post_init__(self):
        if self.raw.ndim != 3:
            raise ValidationError(f"raw must be [n, d, M], got {self.raw.shape}")
        if np.any(self.raw < 0):
            raise ValidationError("negative projected activation")


@dataclass(frozen=True)
class CurvePoint:
    tau: float
    diversity: float
    inconsistency: float
    n_defined_filters: int = 0


@dataclass
class Curve:
    points: list = field(default_factory=list)
    truncated: bool = False

    @property
    def taus(self) -> np.ndarray:
        return np.array([p.tau for p in self.points])

    @property
    def diversities(self) -> np.ndarray:
        return np.array([p.diversity for p in self.points])

    @property
    def inconsistencies(self) -> np.ndarray:
        return np.array([p.inconsistency for p in self.points])

    def at(self, diversity) -> np.ndarray:
        """Inconsistency linearly interpolated at the given diversities."""
        return np.interp(diversity, self.diversities, self.inconsistencies)
