import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfcnn.metrics import (
    ConceptProbabilities,
    concept_probabilities,
    concept_probability_matrix,
    diversity,
    entropies,
    inconsistency,
    min_filters,
    project_rf,
    sample_curve,
    shuffle_baseline,
    threshold_rf,
    _DiversityIndex,
)
from cfcnn.types import ActivationBatch, ConceptMaskSet, ReceptiveFieldStack, ValidationError


def naive_probabilities(binary, masks):
    """binary [n][M] of 0/1, masks [n][T][M]; returns list or None."""
    n, T, M = len(masks), len(masks[0]), len(masks[0][0])
    denom = sum(binary[I][u] for I in range(n) for u in range(M))
    if denom == 0:
        return None
    return [sum(min(binary[I][u], masks[I][j][u]) for I in range(n) for u in range(M)) / denom for j in range(T)]


def naive_entropy(p):
    h = 0.0
    for v in p:
        if v > 0:
            h -= v * math.log(v)
    return h


def naive_diversity(binary, gamma):
    n, d, M = len(binary), len(binary[0]), len(binary[0][0])
    total = 0.0
    for I in range(n):
        count = 0
        for u in range(M):
            share = sum(binary[I][i][u] for i in range(d)) / d
            if share >= gamma:
                count += 1
        total += count
    return total / n / M


def random_masks(rng, n, T, M):
    labels = rng.integers(0, T, size=(n, M))
    return ConceptMaskSet.from_label_maps(labels, [f"c{j}" for j in range(T)])


@pytest.mark.parametrize("seed", range(30))
def test_metrics_match_naive_oracle(seed):
    rng = np.random.default_rng(seed)
    n, d, M, T = rng.integers(1, 5), rng.integers(1, 7), rng.integers(1, 65), rng.integers(1, 5)
    binary = rng.random((n, d, M)) < rng.uniform(0, 1)
    masks = random_masks(rng, n, T, M)
    P, defined = concept_probability_matrix(binary, masks)
    h = entropies(P)
    for i in range(d):
        ref = naive_probabilities(binary[:, i].astype(int).tolist(), masks.masks.astype(int).tolist())
        single = concept_probabilities(binary[:, i], masks, i)
        if ref is None:
            assert not single.defined and not defined[i]
            continue
        assert single.p.tolist() == ref
        assert P[i].tolist() == pytest.approx(ref, abs=1e-15)
        assert inconsistency(single) == pytest.approx(naive_entropy(ref), abs=1e-15)
        assert h[i] == pytest.approx(naive_entropy(ref), abs=1e-15)
    for gamma in (0.2, 0.5, 1.0):
        assert diversity(binary, gamma) == naive_diversity(binary.astype(int).tolist(), gamma)


def test_entropy_analytic_cases():
    assert inconsistency([1.0, 0.0, 0.0]) == 0.0
    assert inconsistency([0.25] * 4) == pytest.approx(math.log(4), abs=1e-15)
    assert inconsistency([0.5, 0.5, 0, 0]) == pytest.approx(math.log(2), abs=1e-15)
    with pytest.raises(ValidationError):
        inconsistency(ConceptProbabilities(None, 3))


def test_probabilities_perfect_alignment_and_full_rf(rng):
    masks = random_masks(rng, 3, 4, 20)
    exact = concept_probabilities(masks.masks[:, 0], masks)
    assert exact.p.tolist() == [1.0, 0.0, 0.0, 0.0]
    full = concept_probabilities(np.ones((3, 20), bool), masks)
    areas = masks.masks.sum(axis=(0, 2)) / (3 * 20)
    np.testing.assert_allclose(full.p, areas)
    assert not concept_probabilities(np.zeros((3, 20)), masks).defined


def test_probabilities_shape_mismatch(rng):
    masks = random_masks(rng, 3, 2, 20)
    with pytest.raises(ValidationError):
        concept_probabilities(np.ones((3, 21)), masks)


def test_diversity_cases():
    assert diversity(np.ones((2, 5, 9)), 0.2) == 1.0
    assert diversity(np.zeros((2, 5, 9)), 0.2) == 0.0
    b = np.zeros((1, 10, 3), bool)
    b[0, :2, 1] = True  # exactly 2 of 10 filters cover pixel 1
    assert diversity(b, 0.2) == pytest.approx(1 / 3)


def test_min_filters_boundary():
    assert min_filters(10, 0.2) == 2
    assert min_filters(32, 0.2) == 7
    assert min_filters(5, 1.0) == 5


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_diversity_monotone_in_tau_and_gamma(seed):
    rng = np.random.default_rng(seed)
    raw = rng.exponential(size=(3, 6, 30))
    taus = np.sort(rng.uniform(0, raw.max(), size=4))
    divs = [diversity(raw >= t, 0.3) for t in taus]
    assert all(a >= b for a, b in zip(divs, divs[1:]))
    gammas = np.sort(rng.uniform(0.01, 1, size=4))
    b = raw >= taus[1]
    divs = [diversity(b, g) for g in gammas]
    assert all(a >= b for a, b in zip(divs, divs[1:]))
    index = _DiversityIndex(raw, 0.3)
    for t in taus:
        assert index(t) == diversity(raw >= t, 0.3)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_partitioning_probabilities_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    masks = random_masks(rng, 3, 4, 25)
    b = rng.random((3, 5, 25)) < 0.4
    P, defined = concept_probability_matrix(b, masks)
    np.testing.assert_allclose(P[defined].sum(axis=1), 1.0, atol=1e-8)
    h = entropies(P)[defined]
    assert np.all(h >= 0) and np.all(h <= math.log(4) + 1e-12)


def test_threshold_rf():
    stack = ReceptiveFieldStack(np.array([[[0.1, 0.5, 0.9]]]))
    assert threshold_rf(stack, 0.5).binary.astype(int).tolist() == [[[0, 1, 1]]]
    assert threshold_rf(stack, 0.0).binary.all()
    assert not threshold_rf(stack, 1.0).binary.any()


def test_project_constant_and_identity(rng):
    const = ActivationBatch(np.full((2, 3, 16), 0.7), spatial_shape=(4, 4))
    np.testing.assert_allclose(project_rf(const, (32, 32)).raw, 0.7, rtol=1e-6)
    x = rng.uniform(size=(2, 3, 64)).astype(np.float32)
    np.testing.assert_allclose(project_rf(ActivationBatch(x), (8, 8)).raw, x)


@pytest.mark.parametrize("cell", [(0, 0), (2, 5), (7, 7), (4, 1)])
def test_projected_peak_lands_in_cell_patch(cell):
    x = np.zeros((2, 1, 64))
    x[:, 0, cell[0] * 8 + cell[1]] = 1.0
    raw = project_rf(ActivationBatch(x), (64, 64)).raw[0, 0].reshape(64, 64)
    r, c = np.unravel_index(np.argmax(raw), raw.shape)
    # 8x upsampling: cell (i, j) covers rows 8i..8i+7, cols 8j..8j+7
    assert 8 * cell[0] <= r < 8 * cell[0] + 8
    assert 8 * cell[1] <= c < 8 * cell[1] + 8
    assert raw.max() <= 1.0 + 1e-6 and raw.min() >= 0


def step_stack(heights, n=2, M=16):
    raw = np.broadcast_to(np.asarray(heights, float)[None, :, None], (n, len(heights), M)).copy()
    masks = ConceptMaskSet.from_label_maps(np.zeros((n, M), int), ["all"])
    return ReceptiveFieldStack(raw), masks


def test_curve_on_step_diversity():
    # 5 filters, gamma 0.2 means a single covering filter suffices: diversity is 1 for
    # tau <= max height and 0 above, so only the level 1 is reachable
    stack, masks = step_stack([0.2, 0.4, 0.6, 0.8, 1.0])
    curve = sample_curve(stack, masks, n_points=4, gamma=0.2)
    assert curve.truncated
    assert curve.diversities.tolist() == [1.0]
    # with gamma 1 every filter must cover: same single step at the smallest height
    curve = sample_curve(stack, masks, n_points=4, gamma=1.0)
    assert curve.diversities.tolist() == [1.0] and curve.taus[0] <= 0.2


def test_curve_two_points_and_monotone(rng):
    raw = rng.exponential(size=(4, 8, 256))
    masks = random_masks(rng, 4, 3, 256)
    curve = sample_curve(ReceptiveFieldStack(raw), masks, n_points=2)
    np.testing.assert_allclose(curve.diversities, [0.5, 1.0], atol=0.02)
    curve = sample_curve(ReceptiveFieldStack(raw), masks, n_points=20)
    assert not curve.truncated and len(curve.points) == 20
    assert np.all(np.diff(curve.diversities) > 0)
    assert np.all(np.diff(curve.taus) < 0)
    np.testing.assert_allclose(curve.diversities, np.arange(1, 21) / 20, atol=0.02)


def test_shuffle_baseline(rng):
    b = ActivationBatch(rng.uniform(size=(6, 3, 4)))
    s = shuffle_baseline(b, seed=5)
    for i in range(3):
        before = sorted(map(tuple, b.values[:, i]))
        after = sorted(map(tuple, s.values[:, i]))
        assert before == after
    assert np.array_equal(s.values, shuffle_baseline(b, seed=5).values)
    with pytest.raises(ValidationError):
        shuffle_baseline(ActivationBatch(np.ones((1, 2, 4))))


def test_curve_returns_achievable_step_levels():
    # one filter, each image's map is a constant: diversity(tau) = #{heights >= tau} / n,
    # so the reachable levels are k/4 and the in-between targets are flagged
    heights = np.array([0.9, 0.3, 0.6, 0.45])
    raw = np.broadcast_to(heights[:, None, None], (4, 1, 16)).copy()
    masks = ConceptMaskSet.from_label_maps(np.zeros((4, 16), int), ["all"])
    curve = sample_curve(ReceptiveFieldStack(raw), masks, n_points=8, gamma=0.2)
    assert curve.truncated
    assert curve.diversities.tolist() == [0.25, 0.5, 0.75, 1.0]
    srt = np.sort(heights)[::-1]
    for level, tau in zip(curve.diversities, curve.taus):
        k = int(level * 4)
        assert srt[k] < tau <= srt[k - 1] if k < 4 else tau <= srt[-1]
