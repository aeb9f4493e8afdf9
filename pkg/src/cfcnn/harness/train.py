"""Alternating optimization of network weights and the filter partition."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from ..config import TrainingConfig
from ..losses import classification_loss, compose_objective, group_loss, multi_loss
from ..partition import ncut_objective, spectral_partition, update_partition
from ..similarity import MomentAccumulator, group_activations, pairwise_similarity
from ..types import FilterPartition, ValidationError
from .model import extract_activations

log = logging.getLogger(__name__)

MIN_BATCH = 8


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss; ``manifest`` holds the run so far."""

    def __init__(self, message, manifest):
        super().__init__(message)
        self.manifest = manifest


@dataclass
class RunManifest:
    config: dict
    initial_partition: list = field(default_factory=list)
    initial_ncut: Optional[float] = None
    epochs: list = field(default_factory=list)
    final: dict = field(default_factory=dict)

    @property
    def partition(self) -> FilterPartition:
        groups = self.epochs[-1]["partition"] if self.epochs else self.initial_partition
        return FilterPartition(tuple(tuple(g) for g in groups))

    def series(self, key) -> list:
        return [e[key] for e in self.epochs]

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def seed_everything(seed: int) -> None:
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def minibatches(labels, batch_size, rng, stratified=False, num_classes=None):
    """Index batches for one epoch; stratified batches contain every class."""
    n = len(labels)
    n_batches = max(1, n // batch_size)
    if not stratified:
        order = rng.permutation(n)
        batches = [order[i * batch_size:(i + 1) * batch_size] for i in range(n_batches)]
        return [b for b in batches if len(b) >= MIN_BATCH]
    C = num_classes or int(labels.max()) + 1
    per_class = [rng.permutation(np.flatnonzero(labels == c)) for c in range(C)]
    if min(len(p) for p in per_class) < n_batches:
        raise ValidationError("too few images of some class for stratified batches")
    chunks = [np.array_split(p, n_batches) for p in per_class]
    return [rng.permutation(np.concatenate([ch[b] for ch in chunks])) for b in range(n_batches)]


def initial_partition(model, images, config: TrainingConfig):
    """Spectral partition of the untrained model's activations over the training set."""
    _, acts = extract_activations(model, images)
    acc = MomentAccumulator(acts.shape[1], acts.shape[2])
    acc.update(acts)
    config.validate(d_filters=acts.shape[1])
    return spectral_partition(acc.similarity(config.epsilon_sigma), config.num_groups, config.random_seed)


def accuracy(logits, labels) -> float:
    return float((np.argmax(logits, axis=1) == np.asarray(labels)).mean())


def train(model, dataset, config: TrainingConfig, test_dataset=None) -> RunManifest:
    """Alternate gradient steps on the weights with one partition update per period.

    Within an epoch the partition is fixed. Epoch moments are accumulated from
    the activations seen by the gradient steps and the partition step runs on
    the resulting similarity matrix at the epoch boundary.
    """
    seed_everything(config.random_seed)
    rng = np.random.default_rng(config.random_seed)
    manifest = RunManifest(config.to_dict())
    if len(dataset) == 0:
        raise ValidationError("empty dataset")

    init = initial_partition(model, dataset.images, config)
    partition = init.partition
    manifest.initial_partition = partition.to_json()
    manifest.initial_ncut = init.ncut_value

    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    images = torch.as_tensor(dataset.images)
    labels = torch.as_tensor(dataset.labels)
    multi = config.task_mode == "multi"
    C = model.num_classes

    for epoch in range(1, config.epochs + 1):
        t0 = time.time()
        model.train()
        used = partition
        acc = None
        sums = {"cls": 0.0, "group": 0.0, "multi": 0.0, "total": 0.0}
        correct = seen = steps = 0
        batches = minibatches(dataset.labels, config.batch_size, rng, stratified=multi, num_classes=C)
        for idx in batches:
            x, y = images[idx], labels[idx]
            logits, acts = model(x)
            S = pairwise_similarity(acts, config.epsilon_sigma)
            g = group_loss(S, used)
            cls = classification_loss(logits, y)
            ml = multi_loss(group_activations(acts, used), y, C) if multi else None
            parts = compose_objective(g, cls, config, ml)
            if not torch.isfinite(parts.total):
                manifest.final["aborted_epoch"] = epoch
                raise DivergenceError(f"non-finite loss at epoch {epoch}", manifest)
            opt.zero_grad()
            parts.total.backward()
            opt.step()

            a = acts.detach().double().numpy()
            if acc is None:
                acc = MomentAccumulator(a.shape[1], a.shape[2])
            acc.update(a)
            sums["cls"] += cls.item()
            sums["group"] += g.item()
            sums["multi"] += ml.item() if ml is not None else 0.0
            sums["total"] += parts.total.item()
            correct += int((logits.argmax(1) == y).sum())
            seen += len(idx)
            steps += 1

        record = {
            "epoch": epoch,
            "cls_loss": sums["cls"] / steps,
            "group_loss": sums["group"] / steps,
            "multi_loss": sums["multi"] / steps if multi else None,
            "total": sums["total"] / steps,
            "accuracy": correct / seen,
            "partition_used": used.to_json(),
        }
        S_epoch = acc.similarity(config.epsilon_sigma)
        if epoch % config.partition_update_period == 0:
            partition = update_partition(S_epoch, config, used)
        record["partition"] = partition.to_json()
        record["partition_updated"] = epoch % config.partition_update_period == 0
        record["ncut_value"] = ncut_objective(S_epoch, partition)
        record["epoch_group_loss"] = float(group_loss(S_epoch, partition))
        if test_dataset is not None:
            logits_t, _ = extract_activations(model, test_dataset.images)
            record["test_accuracy"] = accuracy(logits_t, test_dataset.labels)
        record["seconds"] = time.time() - t0
        manifest.epochs.append(record)
        log.info(
            "epoch %d cls=%.4f group=%.4f acc=%.3f ncut=%.4f",
            epoch, record["cls_loss"], record["group_loss"], record["accuracy"], record["ncut_value"],
        )
        if not math.isfinite(record["total"]):
            raise DivergenceError(f"non-finite loss at epoch {epoch}", manifest)
    return manifest
