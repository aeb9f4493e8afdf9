"""Minimal numpy/torch dispatch so the loss math is written once."""
import numpy as np
import torch


def namespace(x):
    return torch if isinstance(x, torch.Tensor) else np


def as_like(ref, arr):
    """Convert ``arr`` to the array type, dtype and device of ``ref``."""
    if isinstance(ref, torch.Tensor):
        return torch.as_tensor(np.asarray(arr), dtype=ref.dtype, device=ref.device)
    return np.asarray(arr, dtype=ref.dtype if np.issubdtype(ref.dtype, np.floating) else float)


def unwrap(x):
    """Return raw activation values from an ActivationBatch or an array."""
    if isinstance(x, torch.Tensor):
        return x
    values = getattr(x, "values", x)
    if isinstance(values, torch.Tensor):
        return values
    values = np.asarray(values)
    if not np.issubdtype(values.dtype, np.floating):
        values = values.astype(float)
    return values
