"""Batch-level mixing: mixup and cutmix.

Targets become mixed-weight rows; the effective mixing coefficient for
cutmix is recomputed from the pasted region's integer pixel area so the
target weights match the image content exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ..recipes import TrainingRecipe


@dataclass
class MixedBatch:
    images: torch.Tensor
    targets: torch.Tensor  # (N, K) weight rows
    lam: float
    mix_kind: str  # none | mixup | cutmix


def one_hot_rows(targets: torch.Tensor, num_classes: int) -> torch.Tensor:
    if targets.dim() == 2:
        return targets.float()
    return F.one_hot(targets.long(), num_classes).float()


def apply_mixup(
    images: torch.Tensor,
    targets: torch.Tensor,
    alpha: float,
    num_classes: int,
    rng: np.random.Generator,
) -> MixedBatch:
    """Convex image blend with a single Beta(alpha, alpha) draw per batch."""
    rows = one_hot_rows(targets, num_classes)
    if alpha <= 0:
        return MixedBatch(images, rows, 1.0, "none")
    lam = float(rng.beta(alpha, alpha))
    perm = torch.as_tensor(rng.permutation(images.shape[0]), device=images.device)
    mixed = lam * images + (1.0 - lam) * images[perm]
    mixed_rows = lam * rows + (1.0 - lam) * rows[perm]
    return MixedBatch(mixed, mixed_rows, lam, "mixup")


def _cut_box(h: int, w: int, lam: float, rng: np.random.Generator) -> tuple[int, int, int, int]:
    ratio = float(np.sqrt(1.0 - lam))
    cut_h, cut_w = int(h * ratio), int(w * ratio)
    cy = int(rng.integers(h))
    cx = int(rng.integers(w))
    y1 = max(cy - cut_h // 2, 0)
    y2 = min(cy + cut_h // 2, h)
    x1 = max(cx - cut_w // 2, 0)
    x2 = min(cx + cut_w // 2, w)
    return y1, y2, x1, x2


def apply_cutmix(
    images: torch.Tensor,
    targets: torch.Tensor,
    alpha: float,
    num_classes: int,
    rng: np.random.Generator,
) -> MixedBatch:
    """Paste a rectangle from a permuted sample; lam follows the pasted area."""
    rows = one_hot_rows(targets, num_classes)
    if alpha <= 0:
        return MixedBatch(images, rows, 1.0, "none")
    lam_raw = float(rng.beta(alpha, alpha))
    n, _, h, w = images.shape
    y1, y2, x1, x2 = _cut_box(h, w, lam_raw, rng)
    perm = torch.as_tensor(rng.permutation(n), device=images.device)
    mixed = images.clone()
    mixed[:, :, y1:y2, x1:x2] = images[perm][:, :, y1:y2, x1:x2]
    lam = 1.0 - ((y2 - y1) * (x2 - x1)) / (h * w)
    mixed_rows = lam * rows + (1.0 - lam) * rows[perm]
    return MixedBatch(mixed, mixed_rows, lam, "cutmix")


def mix_batch(
    images: torch.Tensor,
    targets: torch.Tensor,
    recipe: TrainingRecipe,
    num_classes: int,
    rng: np.random.Generator,
) -> MixedBatch:
    """Apply the recipe's mixing; with both enabled, pick one per batch."""
    use_mixup = recipe.mixup_alpha > 0
    use_cutmix = recipe.cutmix_alpha > 0
    if use_mixup and use_cutmix:
        if rng.random() < 0.5:
            use_cutmix = False
        else:
            use_mixup = False
    if use_mixup:
        return apply_mixup(images, targets, recipe.mixup_alpha, num_classes, rng)
    if use_cutmix:
        return apply_cutmix(images, targets, recipe.cutmix_alpha, num_classes, rng)
    return MixedBatch(images, one_hot_rows(targets, num_classes), 1.0, "none")
