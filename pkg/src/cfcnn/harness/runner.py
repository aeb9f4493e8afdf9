"""End-to-end runs driven by a :class:`TrainingConfig`."""
from __future__ import annotations

import json
import logging
from pathlib import Path

import torch

from ..config import TrainingConfig
from ..types import FilterPartition
from .data import SyntheticSceneSpec, default_spec, generate_synthetic, load_image_dir
from .evaluate import evaluate
from .model import build_model
from .train import RunManifest, seed_everything, train

log = logging.getLogger(__name__)


def load_datasets(config: TrainingConfig):
    """Training and test sets from image directories or the synthetic generator."""
    if config.train_data:
        train_ds = load_image_dir(config.train_data, config.image_size)
        test_ds = load_image_dir(config.test_data, config.image_size) if config.test_data else None
        return train_ds, test_ds
    if config.synth_spec:
        spec = SyntheticSceneSpec.from_dict(config.synth_spec)
    else:
        spec = default_spec(config.num_classes, config.image_size)
    # test scenes come from a disjoint seed stream
    train_ds = generate_synthetic(spec, config.n_train, seed=config.random_seed)
    test_ds = generate_synthetic(spec, config.n_test, seed=config.random_seed + 10_000)
    return train_ds, test_ds


def run_experiment(config: TrainingConfig, out_dir=None, datasets=None):
    """Train, evaluate and (optionally) write a run directory.

    Returns ``(model, manifest, summary)``.
    """
    train_ds, test_ds = datasets if datasets is not None else load_datasets(config)
    seed_everything(config.random_seed)
    model = build_model(config.arch, config.target_layer, config.num_classes)
    manifest = train(model, train_ds, config, test_dataset=test_ds)
    out = Path(out_dir) if out_dir is not None else None
    summary = None
    if test_ds is not None:
        summary = evaluate(model, test_ds, config, manifest.partition, out_dir=out)
        manifest.final.update({k: v for k, v in summary.to_dict().items() if k in ("accuracy", "files")})
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        config.save(out / "config.json")
        manifest.save(out / "manifest.json")
        torch.save(model.state_dict(), out / "model.pt")
    return model, manifest, summary


def load_run(run_dir):
    """Rebuild ``(model, config, manifest)`` from a run directory."""
    run_dir = Path(run_dir)
    config = TrainingConfig.from_dict(json.loads((run_dir / "config.json").read_text()))
    manifest = RunManifest.load(run_dir / "manifest.json")
    model = build_model(config.arch, config.target_layer, config.num_classes)
    model.load_state_dict(torch.load(run_dir / "model.pt", weights_only=True))
    model.eval()
    return model, config, manifest
