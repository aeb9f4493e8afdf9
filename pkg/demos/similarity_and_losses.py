"""Filter similarity and the grouping losses on a toy activation batch.

Two pairs of filters share a spatial pattern up to scale and offset, so the
shifted correlation kernel puts them close to 2 and the grouping loss prefers
the partition that keeps each pair together.
"""
import numpy as np
import torch

from cfcnn.losses import group_loss, multi_loss
from cfcnn.similarity import embedding_similarity, group_activations, pairwise_similarity
from cfcnn.types import make_partition

rng = np.random.default_rng(0)
n, m = 16, 25
a = rng.exponential(size=(n, 1, m))
b = rng.exponential(size=(n, 1, m))
acts = np.concatenate([a, 3 * a + 1, b, 0.5 * b + 0.2], axis=1)
acts += 0.05 * rng.random(acts.shape)

S = pairwise_similarity(acts)
np.set_printoptions(precision=3, suppress=True)
print("similarity matrix:\n", S)
print("embedding form agrees:", np.allclose(S, embedding_similarity(acts), atol=1e-6))

good = make_partition([0, 0, 1, 1], 2)
bad = make_partition([0, 1, 0, 1], 2)
print(f"group loss, pairs together: {group_loss(S, good):.4f}")
print(f"group loss, pairs split:    {group_loss(S, bad):.4f}   (range is [-2, 0))")

# the same functions accept torch tensors and backpropagate
x = torch.tensor(acts, requires_grad=True)
loss = group_loss(pairwise_similarity(x), bad)
loss.backward()
print("gradient norm w.r.t. activations:", float(x.grad.norm()))

# category separation: images of class 0 excite group 0, class 1 excites group 1
labels = np.arange(n) % 2
acts2 = acts.copy()
acts2[labels == 0, 2:] *= 0.1
acts2[labels == 1, :2] *= 0.1
Z = group_activations(acts2, good)
print(f"multi-category loss, separated classes: {multi_loss(Z, labels, 2):.4f}  (best is -2)")
