"""File formats: activation dumps, partitions and concept-merge configs.

Activation dumps are ``.npz`` containers holding ``values`` (float32
``[n, d, m]``), ``image_ids`` (strings), ``layer_name`` (string) and
optionally ``spatial_shape`` (``[h, w]``).
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .types import ActivationBatch, FilterPartition, ValidationError


def save_activations(batch: ActivationBatch, path) -> Path:
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(
            fh,
            values=np.asarray(batch.values, dtype=np.float32),
            image_ids=np.asarray(batch.image_ids, dtype=str),
            layer_name=np.asarray(batch.layer_name),
            spatial_shape=np.asarray(batch.spatial_shape, dtype=np.int64),
        )
    return path


def load_activations(path) -> ActivationBatch:
    with np.load(path, allow_pickle=False) as data:
        missing = {"values", "image_ids", "layer_name"} - set(data.files)
        if missing:
            raise ValidationError(f"activation dump lacks arrays {sorted(missing)}")
        shape = tuple(data["spatial_shape"].tolist()) if "spatial_shape" in data.files else None
        batch = ActivationBatch(
            data["values"].astype(np.float32),
            tuple(data["image_ids"].tolist()),
            str(data["layer_name"]),
            shape,
        )
    batch.validate()
    return batch


def save_partition(partition: FilterPartition, path, ncut_value=None, **extra) -> Path:
    path = Path(path)
    payload = {"groups": partition.to_json(), "ncut_value": ncut_value, **extra}
    path.write_text(json.dumps(payload, indent=2))
    return path


def load_partition(path) -> FilterPartition:
    data = json.loads(Path(path).read_text())
    groups = data["groups"] if isinstance(data, dict) else data
    return FilterPartition(tuple(tuple(g) for g in groups))


def load_merge_config(path) -> dict:
    """``{raw_label: concept_name}`` with integer keys."""
    data = json.loads(Path(path).read_text())
    return {int(k): str(v) for k, v in data.items()}
