"""Command-line entry point ``cfcnn``.

Exit codes: 0 success, 1 validation error, 2 training divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import TrainingConfig
from .io import load_activations, load_merge_config, save_activations, save_partition
from .metrics import project_rf, sample_curve, shuffle_baseline
from .partition import spectral_partition
from .similarity import pairwise_similarity
from .types import ActivationBatch, ConceptMaskSet, SimilarityMatrix, ValidationError

log = logging.getLogger("cfcnn")


def cmd_train(args):
    from .harness.runner import run_experiment

    config = TrainingConfig.load(args.config)
    out = args.out or config.output_dir
    _, manifest, summary = run_experiment(config, out_dir=out)
    last = manifest.epochs[-1] if manifest.epochs else {}
    print(json.dumps({
        "run_dir": str(out),
        "epochs": len(manifest.epochs),
        "final_group_loss": last.get("group_loss"),
        "accuracy": None if summary is None else summary.accuracy,
    }, indent=2))


def cmd_cluster(args):
    if args.similarity:
        S = np.load(args.similarity)
    else:
        S = pairwise_similarity(load_activations(args.activations).values.astype(float), args.eps)
    S = SimilarityMatrix(S, atol=1e-6).entries
    result = spectral_partition(S, args.k, args.seed)
    save_partition(result.partition, args.out, result.ncut_value,
                   eigenvalues=result.eigenvalues.tolist())
    print(json.dumps({"groups": result.partition.to_json(), "ncut_value": result.ncut_value}))


def _write_curve(curve, out):
    from .harness.evaluate import write_curve

    csv_path, json_path = write_curve(curve, out)
    print(f"wrote {csv_path} and {json_path} ({len(curve.points)} points"
          f"{', truncated' if curve.truncated else ''})")


def cmd_curve(args):
    from .harness.data import load_masks

    batch = load_activations(args.activations)
    merge = load_merge_config(args.merge) if args.merge else None
    mask_json = Path(args.masks) / "concepts.json"
    if merge is None and mask_json.exists():
        merge = load_merge_config(mask_json)
    maps, names = load_masks(args.masks, batch.image_ids, merge,
                             tuple(args.image_size) if args.image_size else None)
    masks = ConceptMaskSet.from_label_maps(maps, names)
    if args.shuffle_seed is not None:
        batch = shuffle_baseline(batch, args.shuffle_seed)
    stack = project_rf(batch, masks.image_shape)
    curve = sample_curve(stack, masks, args.points, args.gamma)
    _write_curve(curve, args.out)


def cmd_evaluate(args):
    from .harness.evaluate import evaluate, write_curve
    from .harness.runner import load_datasets, load_run

    model, config, manifest = load_run(args.run)
    _, test_ds = load_datasets(config)
    if test_ds is None:
        raise ValidationError("run config names no test data")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    summary = evaluate(model, test_ds, config, manifest.partition, out_dir=out.parent / (out.stem + "_eval"))
    if summary.curve is not None:
        write_curve(summary.curve, out)
        write_curve(summary.shuffled_curve, out.with_name(out.stem + "_shuffled" + out.suffix))
    print(json.dumps({"accuracy": summary.accuracy, "curve": str(out) if summary.curve else None}))


def cmd_synth(args):
    from .harness.data import SyntheticSceneSpec, default_spec, generate_synthetic, save_dataset

    if args.spec:
        spec = SyntheticSceneSpec.from_dict(json.loads(Path(args.spec).read_text()))
    else:
        spec = default_spec(args.classes)
    ds = generate_synthetic(spec, args.n, args.seed)
    save_dataset(ds, args.out, spec)
    print(f"wrote {len(ds)} images to {args.out}")


def cmd_dump(args):
    from .harness.model import extract_activations
    from .harness.runner import load_datasets, load_run

    model, config, _ = load_run(args.run)
    train_ds, test_ds = load_datasets(config)
    ds = test_ds if args.split == "test" and test_ds is not None else train_ds
    _, acts = extract_activations(model, ds.images)
    batch = ActivationBatch(acts, tuple(ds.image_ids), model.target_layer, model.target_spatial)
    save_activations(batch, args.out)
    print(f"wrote {acts.shape} activations to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfcnn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a compositional model from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", help="run directory (default: config output_dir)")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("cluster", help="spectral partition of filters")
    src = c.add_mutually_exclusive_group(required=True)
    src.add_argument("--activations", help="activation dump (.npz)")
    src.add_argument("--similarity", help="similarity matrix (.npy)")
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--eps", type=float, default=1e-8)
    c.set_defaults(func=cmd_cluster)

    e = sub.add_parser("evaluate", help="curves and accuracy for a finished run")
    e.add_argument("--run", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    cv = sub.add_parser("curve", help="inconsistency-diversity curve from an activation dump")
    cv.add_argument("--activations", required=True)
    cv.add_argument("--masks", required=True, help="directory of per-image label maps")
    cv.add_argument("--merge", help="JSON {raw_label: concept_name}")
    cv.add_argument("--points", type=int, default=20)
    cv.add_argument("--gamma", type=float, default=0.2)
    cv.add_argument("--image-size", type=int, nargs=2, metavar=("H", "W"))
    cv.add_argument("--shuffle-seed", type=int, help="evaluate the shuffled baseline instead")
    cv.add_argument("--out", default="curves.csv")
    cv.set_defaults(func=cmd_curve)

    s = sub.add_parser("synth", help="generate a synthetic part-scene dataset")
    s.add_argument("--spec")
    s.add_argument("--classes", type=int, default=2)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    d = sub.add_parser("dump", help="write target-layer activations of a run")
    d.add_argument("--run", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--split", choices=("train", "test"), default="test")
    d.set_defaults(func=cmd_dump)
    return p


def main(argv=None) -> int:
    from .harness.train import DivergenceError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
