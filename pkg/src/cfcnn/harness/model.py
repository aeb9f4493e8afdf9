"""Small CNNs whose target layer exposes post-ReLU feature maps."""
from __future__ import annotations

from collections import OrderedDict

import numpy as np
import torch
from torch import nn

from ..types import ValidationError

ARCHS = {
    # name -> list of (layer_name, out_channels, pool_after)
    "tiny-cnn": [("conv1", 8, True), ("conv2", 16, True), ("conv3", 32, True), ("conv4", 32, False)],
    "vgg-like": [
        ("conv1_1", 16, False), ("conv1_2", 16, True),
        ("conv2_1", 32, False), ("conv2_2", 32, True),
        ("conv3_1", 64, False), ("conv3_2", 64, True),
        ("conv4_1", 64, False), ("conv4_2", 64, False),
    ],
}


def conv_block(cin, cout):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1, padding_mode="replicate", bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=False),
    )


class CompositionalNet(nn.Module):
    """Conv blocks, global average pooling and a linear classifier.

    ``forward`` returns ``(logits, activations)`` where ``activations`` is the
    target layer's post-ReLU output flattened to ``[b, d, h*w]``.
    """

    def __init__(self, arch="tiny-cnn", target_layer=None, num_classes=2, in_channels=3):
        super().__init__()
        if arch not in ARCHS:
            raise ValidationError(f"unknown arch {arch!r}; choose from {sorted(ARCHS)}")
        layout = ARCHS[arch]
        names = [name for name, _, _ in layout]
        self.arch = arch
        self.target_layer = target_layer or names[-1]
        if self.target_layer not in names:
            raise ValidationError(f"layer {self.target_layer!r} not in {arch}: {names}")
        blocks = OrderedDict()
        cin = in_channels
        for name, cout, pool in layout:
            blocks[name] = conv_block(cin, cout)
            if pool:
                blocks[name + "_pool"] = nn.MaxPool2d(2)
            cin = cout
        self.features = nn.Sequential(blocks)
        self.classifier = nn.Linear(cin, num_classes)
        self.num_classes = num_classes
        self.target_channels = dict((n, c) for n, c, _ in layout)[self.target_layer]
        self.target_spatial = None

    def forward(self, x):
        target = None
        for name, module in self.features.named_children():
            x = module(x)
            if name == self.target_layer:
                target = x
        self.target_spatial = tuple(target.shape[2:])
        logits = self.classifier(x.mean(dim=(2, 3)))
        return logits, target.flatten(2)


def build_model(arch="tiny-cnn", target_layer=None, num_classes=2) -> CompositionalNet:
    """Replication-padded CNN; target defaults to the last conv layer."""
    return CompositionalNet(arch, target_layer, num_classes)


@torch.no_grad()
def extract_activations(model, images, batch_size=128):
    """Run the model in eval mode; returns ``(logits, activations)`` as numpy."""
    model.eval()
    logits, acts = [], []
    for i in range(0, len(images), batch_size):
        x = torch.as_tensor(images[i:i + batch_size])
        lo, a = model(x)
        logits.append(lo.numpy())
        acts.append(a.numpy())
    return np.concatenate(logits), np.concatenate(acts)
