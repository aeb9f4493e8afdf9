"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py`` (or ``python3
tests/test_acceptance.py``). The summary lines are printed at the end of the
session by the hook in ``conftest.py``. Criteria 7 and 8 train small CNNs
from scratch and take roughly 15 minutes together on one CPU core.
"""
import math
import time

import numpy as np
import pytest
import torch

from cfcnn.config import TrainingConfig
from cfcnn.harness.data import default_spec, generate_synthetic
from cfcnn.harness.evaluate import class_group_profile, evaluate, mean_pairwise_cosine
from cfcnn.harness.model import build_model, extract_activations
from cfcnn.harness.train import train
from cfcnn.losses import group_loss, multi_loss
from cfcnn.metrics import concept_probabilities, diversity, inconsistency, mean_inconsistency_between
from cfcnn.partition import ncut_objective, spectral_partition
from cfcnn.similarity import embedding_similarity, group_activations, pairwise_similarity
from cfcnn.types import make_partition

from conftest import planted_blocks, random_partition_labels, random_similarity
from test_metrics import naive_diversity, naive_entropy, naive_probabilities, random_masks
from test_partition import brute_force_ncut
from test_similarity import finite_difference

RESULTS = []


def report(number, ok, detail, seconds):
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {detail} [{seconds:.1f}s]"
    RESULTS.append(line)
    print(line)
    return ok


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def test_criterion_1_ncut_identity():
    t0 = time.time()
    worst = 0.0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 65))
        K = int(rng.integers(1, min(8, d) + 1))
        S = random_similarity(rng, d)
        part = make_partition(random_partition_labels(rng, d, K), K)
        worst = max(worst, abs(ncut_objective(S, part) - (group_loss(S, part) + K) / 2))
    secs = time.time() - t0
    ok = worst < 1e-8 and secs < 10
    assert report(1, ok, f"200 instances, max |ncut - (L+K)/2| = {worst:.2e} (< 1e-8)", secs)


def test_criterion_2_kernel_forms_agree():
    t0 = time.time()
    worst, used = 0.0, 0
    seed = 0
    while used < 50:
        rng = np.random.default_rng(seed)
        seed += 1
        n, d, m = (int(v) for v in rng.integers(2, 12, size=3))
        x = rng.exponential(size=(n, d, m)) * rng.uniform(0.01, 10)
        if np.sqrt(((x - x.mean(axis=(0, 2), keepdims=True)) ** 2).sum(axis=(0, 2)) / (n - 1)).min() < 1e-3:
            continue
        worst = max(worst, np.abs(pairwise_similarity(x) - embedding_similarity(x)).max())
        used += 1
    secs = time.time() - t0
    ok = worst < 1e-6 and secs < 10
    assert report(2, ok, f"50 batches, max entry difference = {worst:.2e} (< 1e-6)", secs)


def test_criterion_3_gradients():
    t0 = time.time()
    errs_group, errs_multi = [], []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0.05, 1.0, size=(4, 6, 8))
        part = make_partition(random_partition_labels(rng, 6, 2), 2)
        lam, beta = rng.uniform(0.1, 2.0, size=2)

        t = torch.tensor(x, requires_grad=True)
        (lam * group_loss(pairwise_similarity(t), part)).backward()
        fd = finite_difference(lambda v: lam * group_loss(pairwise_similarity(v), part), x, step=1e-6)
        errs_group.append(rel_err(t.grad.numpy(), fd))

        labels = np.concatenate([[0, 1, 2], rng.integers(0, 3, size=1)])
        t = torch.tensor(x, requires_grad=True)
        (beta * multi_loss(group_activations(t, part), labels, 3)).backward()
        fd = finite_difference(lambda v: beta * multi_loss(group_activations(v, part), labels, 3), x, step=1e-6)
        errs_multi.append(rel_err(t.grad.numpy(), fd))
    secs = time.time() - t0
    worst = max(errs_group + errs_multi)
    ok = worst < 1e-4 and secs < 30
    assert report(3, ok, f"max relative error group {max(errs_group):.1e}, multi {max(errs_multi):.1e} (< 1e-4)", secs)


def test_criterion_4_clustering_recovery():
    t0 = time.time()
    exact = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        sizes = list(rng.multinomial(15, np.ones(3) / 3) + 5)
        S, labels = planted_blocks(rng, sizes, within=2.0, noise=0.3)
        # planted labels are shuffled so recovery cannot lean on group numbering
        perm = rng.permutation(labels.size)
        S, labels = S[np.ix_(perm, perm)], labels[perm]
        exact += spectral_partition(S, 3, seed=seed).partition.same_grouping(make_partition(labels, 3))
    near = {"planted": 0, "random": 0}
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        K = int(rng.integers(2, 4))
        d = int(rng.integers(K + 3, 11))
        sizes = list(rng.multinomial(d - 2 * K, np.ones(K) / K) + 2)
        for kind, S in (("planted", planted_blocks(rng, sizes, noise=0.3)[0]), ("random", random_similarity(rng, d))):
            best, _ = brute_force_ncut(S, K)
            near[kind] += spectral_partition(S, K, seed=seed).ncut_value <= 1.05 * best
    secs = time.time() - t0
    ok = exact >= 90 and min(near.values()) >= 90 and secs < 120
    assert report(4, ok, f"exact recovery {exact}/100 (>= 90); within 5% of brute force: "
                         f"planted {near['planted']}/100, random {near['random']}/100 (>= 90)", secs)


def test_criterion_5_metric_oracles():
    t0 = time.time()
    mismatches = checked = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n, d, M, T = (int(v) for v in (rng.integers(1, 5), rng.integers(1, 7), rng.integers(1, 65), rng.integers(1, 6)))
        binary = rng.random((n, d, M)) < rng.uniform(0, 1)
        masks = random_masks(rng, n, T, M)
        mask_list = masks.masks.astype(int).tolist()
        for i in range(d):
            ref = naive_probabilities(binary[:, i].astype(int).tolist(), mask_list)
            got = concept_probabilities(binary[:, i], masks, i)
            checked += 1
            if ref is None:
                mismatches += got.defined
            else:
                mismatches += got.p.tolist() != ref or inconsistency(got) != naive_entropy(ref)
        for gamma in (0.1, 0.2, 0.5, 1.0):
            checked += 1
            mismatches += diversity(binary, gamma) != naive_diversity(binary.astype(int).tolist(), gamma)
    analytic = [
        inconsistency([0.0, 1.0, 0.0]) == 0.0,
        inconsistency([0.25] * 4) == math.log(4),
        diversity(np.ones((3, 5, 10), bool), 0.2) == 1.0,
        diversity(np.zeros((3, 5, 10), bool), 0.2) == 0.0,
    ]
    secs = time.time() - t0
    ok = mismatches == 0 and all(analytic) and secs < 30
    assert report(5, ok, f"{mismatches} mismatches over {checked} oracle comparisons on 100 stacks; "
                         f"analytic cases {sum(analytic)}/4 exact", secs)


def test_criterion_6_bounds_and_invariances():
    t0 = time.time()
    counts = dict.fromkeys(["group bounds", "multi bounds", "kernel range", "affine", "group perm",
                            "multi perm", "monotone tau", "monotone gamma"], 0)
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n, d, m = int(rng.integers(2, 8)), int(rng.integers(2, 12)), int(rng.integers(1, 10))
        K = int(rng.integers(1, d + 1))
        x = rng.exponential(size=(n, d, m))
        S = pairwise_similarity(x)
        part = make_partition(random_partition_labels(rng, d, K), K)
        L = group_loss(S, part)
        counts["group bounds"] += -K - 1e-12 <= L < 0
        counts["kernel range"] += S.min() >= 0 and S.max() <= 2
        a = rng.uniform(0.1, 5.0, size=d)[None, :, None]
        b = rng.uniform(0.0, 3.0, size=d)[None, :, None]
        counts["affine"] += np.abs(pairwise_similarity(a * x + b) - S).max() < 1e-6

        perm = rng.permutation(d)
        moved = make_partition(np.asarray(part.assignments)[perm], K)
        counts["group perm"] += abs(group_loss(pairwise_similarity(x[:, perm]), moved) - L) < 1e-10

        C = int(rng.integers(2, 5))
        labels = np.concatenate([np.arange(C), rng.integers(0, C, size=int(rng.integers(0, 6)))])
        Z = rng.exponential(size=(len(labels), K))
        ml = multi_loss(Z, labels, C)
        counts["multi bounds"] += -C - 1e-12 <= ml < 0
        order = rng.permutation(len(labels))
        kperm = rng.permutation(K)
        counts["multi perm"] += abs(multi_loss(Z[order][:, kperm], labels[order], C) - ml) < 1e-10

        raw = rng.exponential(size=(n, d, 20))
        taus = np.sort(rng.uniform(0, raw.max(), size=5))
        div_tau = [diversity(raw >= t, 0.3) for t in taus]
        counts["monotone tau"] += all(p >= q for p, q in zip(div_tau, div_tau[1:]))
        gammas = np.sort(rng.uniform(0.01, 1.0, size=5))
        div_gamma = [diversity(raw >= taus[1], g) for g in gammas]
        counts["monotone gamma"] += all(p >= q for p, q in zip(div_gamma, div_gamma[1:]))
    secs = time.time() - t0
    ok = all(v == 100 for v in counts.values()) and secs < 60
    detail = ", ".join(f"{k} {v}/100" for k, v in counts.items())
    assert report(6, ok, detail, secs)


# end-to-end experiments

SEEDS = (0, 1, 2)
WINDOW = (0.4, 0.8)


def experiment_config(seed, **kw):
    base = dict(arch="tiny-cnn", target_layer="conv4", num_groups=4, epochs=30, batch_size=32,
                n_train=2000, n_test=400, random_seed=seed)
    base.update(kw)
    return TrainingConfig(**base)


def fit(config, train_ds):
    torch.manual_seed(config.random_seed)
    model = build_model(config.arch, config.target_layer, config.num_classes)
    manifest = train(model, train_ds, config)
    return model, manifest


@pytest.fixture(scope="module")
def binary_runs():
    t0 = time.time()
    runs = []
    for seed in SEEDS:
        spec = default_spec(2)
        train_ds = generate_synthetic(spec, 2000, seed=seed)
        test_ds = generate_synthetic(spec, 400, seed=seed + 10_000)
        out = {}
        for name, lam in (("compositional", 1.0), ("baseline", 0.0)):
            cfg = experiment_config(seed, lambda_weight=lam)
            model, manifest = fit(cfg, train_ds)
            out[name] = (manifest, evaluate(model, test_ds, cfg, manifest.partition))
        runs.append(out)
    return runs, time.time() - t0


def test_criterion_7_end_to_end(binary_runs):
    runs, secs = binary_runs
    comp = [r["compositional"] for r in runs]
    base = [r["baseline"] for r in runs]

    drops = [(m.epochs[0]["group_loss"], m.epochs[-1]["group_loss"]) for m, _ in comp]
    ok_a = all(last < first for first, last in drops)

    h_comp = mean_inconsistency_between([s.curve for _, s in comp], *WINDOW)
    h_base = mean_inconsistency_between([s.curve for _, s in base], *WINDOW)
    ok_b = h_comp < h_base

    acc_comp = float(np.mean([s.accuracy for _, s in comp]))
    acc_base = float(np.mean([s.accuracy for _, s in base]))
    ok_c = acc_comp >= acc_base - 0.03

    # the shuffled curve permutes the baseline's own feature maps across images
    h_shuf = mean_inconsistency_between([s.shuffled_curve for _, s in base], *WINDOW)
    grid = np.arange(WINDOW[0], WINDOW[1] + 1e-9, 0.05)
    shuf_at = np.mean([s.shuffled_curve.at(grid) for _, s in base], axis=0)
    above = np.mean((shuf_at > np.mean([s.curve.at(grid) for _, s in comp], axis=0))
                    & (shuf_at > np.mean([s.curve.at(grid) for _, s in base], axis=0)))
    ok_d = h_shuf > max(h_comp, h_base)

    report("7a", ok_a, "group loss epoch 1 -> 30 per seed: "
           + ", ".join(f"{a:.3f} -> {b:.3f}" for a, b in drops), secs)
    report("7b", ok_b, f"mean inconsistency on diversity {WINDOW}: compositional {h_comp:.4f} "
                       f"< baseline {h_base:.4f} (3 seeds)", 0.0)
    report("7c", ok_c, f"test accuracy compositional {acc_comp:.4f} >= baseline {acc_base:.4f} - 0.03", 0.0)
    report("7d", ok_d, f"shuffled {h_shuf:.4f} above compositional {h_comp:.4f} and baseline {h_base:.4f} "
                       f"(window mean; pointwise above both on {above:.0%} of grid)", 0.0)
    assert ok_a and ok_b and ok_c and ok_d


@pytest.fixture(scope="module")
def multi_runs():
    t0 = time.time()
    seed = 0
    spec = default_spec(3)
    train_ds = generate_synthetic(spec, 2000, seed=seed)
    test_ds = generate_synthetic(spec, 400, seed=seed + 10_000)
    out = {}
    for name, weight in (("multi", 0.1), ("baseline", 0.0)):
        cfg = experiment_config(seed, task_mode="multi", num_classes=3, lambda_weight=weight, beta_weight=weight)
        model, manifest = fit(cfg, train_ds)
        _, acts = extract_activations(model, test_ds.images)
        profile = class_group_profile(acts, manifest.partition, test_ds.labels, 3)
        out[name] = (manifest, mean_pairwise_cosine(profile))
    return out, time.time() - t0


def test_criterion_8_multi_category(multi_runs):
    out, secs = multi_runs
    manifest, cos_multi = out["multi"]
    _, cos_base = out["baseline"]
    completed = len(manifest.epochs) == 30 and all(np.isfinite(manifest.series("total")))
    ml = manifest.series("multi_loss")
    ok = completed and cos_multi < cos_base and secs < 15 * 60
    assert report(8, ok, f"class-mean group-activation cosine: lambda=beta=0.1 {cos_multi:.4f} < "
                         f"lambda=beta=0 {cos_base:.4f}; multi loss {ml[0]:.3f} -> {ml[-1]:.3f}", secs)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
