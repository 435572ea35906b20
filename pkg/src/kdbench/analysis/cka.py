"""Linear centered kernel alignment between activation sets.

The minibatch mode accumulates the three Frobenius terms (via N x N
centered Gram matrices, which keeps memory independent of feature
width) and takes the ratio once at the end; a single update reduces to
the textbook formula
``|Yc' Xc|_F^2 / (|Xc' Xc|_F * |Yc' Yc|_F)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..errors import BatchError, CKAUndefinedError, ShapeError
from ..models import FeatureTaps

__all__ = ["CKAAccumulator", "cka_linear", "CKAMatrix", "cka_heatmap"]


def _centered_gram(x: torch.Tensor) -> torch.Tensor:
    x = x.reshape(x.shape[0], -1).double()
    x = x - x.mean(dim=0, keepdim=True)
    return x @ x.t()


class CKAAccumulator:
    """Accumulates cross and self terms over batches; value() is the ratio."""

    def __init__(self) -> None:
        self.cross = 0.0
        self.self_x = 0.0
        self.self_y = 0.0
        self.batches = 0

    def update(self, x: torch.Tensor, y: torch.Tensor) -> None:
        if x.shape[0] != y.shape[0]:
            raise ShapeError(
                f"feature batches differ in size: {x.shape[0]} vs {y.shape[0]}"
            )
        if x.shape[0] < 2:
            raise BatchError(f"CKA needs N >= 2 samples per batch, got {x.shape[0]}")
        gx = _centered_gram(x)
        gy = _centered_gram(y)
        self.cross += float((gx * gy).sum())
        self.self_x += float((gx * gx).sum())
        self.self_y += float((gy * gy).sum())
        self.batches += 1

    def value(self) -> float:
        if self.self_x <= 0 or self.self_y <= 0:
            raise CKAUndefinedError("CKA undefined: zero-variance activations")
        return self.cross / float(np.sqrt(self.self_x) * np.sqrt(self.self_y))


def cka_linear(x: torch.Tensor, y: torch.Tensor) -> float:
    """Linear CKA between (N, D1) and (N, D2) feature matrices."""
    acc = CKAAccumulator()
    acc.update(torch.as_tensor(x), torch.as_tensor(y))
    return acc.value()


@dataclass
class CKAMatrix:
    row_layers: list[str]
    col_layers: list[str]
    values: np.ndarray

    def rows(self):
        for i, rl in enumerate(self.row_layers):
            for j, cl in enumerate(self.col_layers):
                yield rl, cl, float(self.values[i, j])


@torch.no_grad()
def cka_heatmap(
    model_a: nn.Module,
    model_b: nn.Module,
    batches,
    layers_a: list[str],
    layers_b: list[str],
    device: torch.device | str = "cpu",
    max_batches: int | None = None,
) -> CKAMatrix:
    """Layer-pair CKA matrix accumulated over a probe batch stream.

    ``batches`` yields image tensors (or (image, target) pairs, targets
    ignored); both models see the identical inputs.
    """
    model_a.eval()
    model_b.eval()
    accs = [[CKAAccumulator() for _ in layers_b] for _ in layers_a]
    with FeatureTaps(model_a, layers_a) as taps_a, FeatureTaps(model_b, layers_b) as taps_b:
        for n, batch in enumerate(batches):
            if max_batches is not None and n >= max_batches:
                break
            images = batch[0] if isinstance(batch, (tuple, list)) else batch
            images = images.to(device)
            model_a(images)
            model_b(images)
            for i, la in enumerate(layers_a):
                for j, lb in enumerate(layers_b):
                    accs[i][j].update(taps_a.outputs[la], taps_b.outputs[lb])
    values = np.array([[accs[i][j].value() for j in range(len(layers_b))]
                       for i in range(len(layers_a))])
    return CKAMatrix(list(layers_a), list(layers_b), values)
