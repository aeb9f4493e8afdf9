"""Audit a trained model: accuracy, inconsistency-diversity curves, overlays."""
from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from ..metrics import project_rf, sample_curve, shuffle_baseline
from ..similarity import group_activations
from ..types import ActivationBatch, Curve, FilterPartition
from .model import extract_activations
from .train import accuracy

log = logging.getLogger(__name__)


@dataclass
class EvalSummary:
    accuracy: float
    curve: Optional[Curve] = None
    shuffled_curve: Optional[Curve] = None
    group_profile: Optional[np.ndarray] = None  # [C, K] mean group activation per class
    files: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"accuracy": self.accuracy, "files": self.files}
        if self.curve is not None:
            out["curve"] = curve_rows(self.curve)
            out["curve_truncated"] = self.curve.truncated
        if self.shuffled_curve is not None:
            out["shuffled_curve"] = curve_rows(self.shuffled_curve)
        if self.group_profile is not None:
            out["group_profile"] = self.group_profile.tolist()
            out["group_profile_cosine"] = mean_pairwise_cosine(self.group_profile)
        return out


def curve_rows(curve: Curve) -> list:
    return [
        {"tau": p.tau, "diversity": p.diversity, "inconsistency": p.inconsistency,
         "n_defined_filters": p.n_defined_filters}
        for p in curve.points
    ]


def write_curve(curve: Curve, path) -> tuple:
    """Write ``path`` as CSV and a JSON mirror next to it."""
    path = Path(path)
    rows = curve_rows(curve)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["tau", "diversity", "inconsistency", "n_defined_filters"])
        w.writeheader()
        w.writerows(rows)
    mirror = path.with_suffix(".json")
    mirror.write_text(json.dumps({"points": rows, "truncated": curve.truncated}, indent=2))
    return path, mirror


def read_curve(path) -> Curve:
    from ..types import CurvePoint

    path = Path(path)
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        return Curve([CurvePoint(**r) for r in data["points"]], data.get("truncated", False))
    with open(path, newline="") as fh:
        pts = [CurvePoint(float(r["tau"]), float(r["diversity"]), float(r["inconsistency"]),
                          int(r["n_defined_filters"])) for r in csv.DictReader(fh)]
    return Curve(pts)


def class_group_profile(acts, partition: FilterPartition, labels, num_classes) -> np.ndarray:
    """Mean group-activation vector of each class, ``[C, K]``."""
    z = group_activations(np.asarray(acts, dtype=float), partition)
    labels = np.asarray(labels)
    return np.stack([z[labels == c].mean(axis=0) for c in range(num_classes)])


def mean_pairwise_cosine(profile) -> float:
    p = np.asarray(profile, dtype=float)
    unit = p / np.maximum(np.linalg.norm(p, axis=1, keepdims=True), 1e-12)
    cos = unit @ unit.T
    iu = np.triu_indices(len(p), k=1)
    return float(cos[iu].mean())


def save_group_overlays(images, raw, partition: FilterPartition, path, n_show=6) -> Path:
    """Grid image: one row per group, mean projected activation of the group over sample images."""
    n_show = min(n_show, len(images))
    H, W = images.shape[2:]
    rows = []
    for g in partition.groups:
        tiles = []
        for i in range(n_show):
            heat = raw[i, list(g)].mean(axis=0).reshape(H, W)
            heat = heat / heat.max() if heat.max() > 0 else heat
            img = np.transpose(images[i], (1, 2, 0))
            red = np.stack([heat, np.zeros_like(heat), np.zeros_like(heat)], axis=-1)
            tiles.append(0.5 * img + 0.5 * red)
        rows.append(np.concatenate(tiles, axis=1))
    grid = (np.clip(np.concatenate(rows, axis=0), 0, 1) * 255).astype(np.uint8)
    path = Path(path)
    Image.fromarray(grid).save(path)
    return path


def evaluate(model, dataset, config, partition: Optional[FilterPartition] = None,
             out_dir=None, concept_mode=None) -> EvalSummary:
    """Accuracy plus, when masks are present, the model's and the shuffled baseline's curves."""
    logits, acts = extract_activations(model, dataset.images)
    summary = EvalSummary(accuracy(logits, dataset.labels))
    if partition is not None:
        summary.group_profile = class_group_profile(acts, partition, dataset.labels, model.num_classes)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    if not dataset.has_masks:
        warnings.warn("dataset has no masks; skipping interpretability metrics", stacklevel=2)
        return summary

    masks = dataset.concept_masks(concept_mode or config.concept_mode)
    batch = ActivationBatch(acts, tuple(dataset.image_ids), model.target_layer, model.target_spatial)
    stack = project_rf(batch, dataset.image_shape)
    summary.curve = sample_curve(stack, masks, config.curve_points, config.gamma)
    if out is not None and partition is not None:
        summary.files["overlays"] = str(save_group_overlays(dataset.images, stack.raw, partition,
                                                            out / "group_overlays.png"))
    del stack
    shuffled = project_rf(shuffle_baseline(batch, config.random_seed), dataset.image_shape)
    summary.shuffled_curve = sample_curve(shuffled, masks, config.curve_points, config.gamma)
    if out is not None:
        summary.files["curve"] = str(write_curve(summary.curve, out / "curve.csv")[0])
        summary.files["shuffled_curve"] = str(write_curve(summary.shuffled_curve, out / "shuffled_curve.csv")[0])
        (out / "summary.json").write_text(json.dumps(summary.to_dict(), indent=2))
    return summary
