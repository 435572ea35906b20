"""Hint-based distillation: feature matching and relational baselines.

Feature maps are (N, C) vectors or (N, C, H, W) grids. Projectors that
align channel counts are ordinary modules built from a ProjectorSpec;
their parameters belong to the trainer's optimizer, not to this module.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import BatchError, ConfigError, ShapeError

_EPS = 1e-12


@dataclass
class ProjectorSpec:
    in_channels: int
    out_channels: int
    kind: str = "conv1x1"  # conv1x1 | linear
    normalization: str = "batch_norm"  # batch_norm | none


def build_projector(spec: ProjectorSpec) -> nn.Module:
    """Materialize the feature transform a spec describes."""
    if spec.in_channels < 1 or spec.out_channels < 1:
        raise ConfigError("projector channel counts must be >= 1")
    layers: list[nn.Module] = []
    if spec.kind == "conv1x1":
        layers.append(nn.Conv2d(spec.in_channels, spec.out_channels, kernel_size=1, bias=False))
        if spec.normalization == "batch_norm":
            layers.append(nn.BatchNorm2d(spec.out_channels))
    elif spec.kind == "linear":
        layers.append(nn.Linear(spec.in_channels, spec.out_channels, bias=False))
        if spec.normalization == "batch_norm":
            layers.append(nn.BatchNorm1d(spec.out_channels))
    else:
        raise ConfigError(f"unknown projector kind {spec.kind!r}")
    if spec.normalization not in ("batch_norm", "none"):
        raise ConfigError(f"unknown projector normalization {spec.normalization!r}")
    return nn.Sequential(*layers)


def _align(f_s: torch.Tensor, f_t: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Reconcile spatial layouts: pool 4D against 2D, downsample larger grids."""
    if f_s.dim() == 4 and f_t.dim() == 2:
        f_s = f_s.mean(dim=(2, 3))
    elif f_s.dim() == 2 and f_t.dim() == 4:
        f_t = f_t.mean(dim=(2, 3))
    elif f_s.dim() == 4 and f_t.dim() == 4 and f_s.shape[2:] != f_t.shape[2:]:
        # Downsample the larger grid; upsampling would invent detail.
        if f_s.shape[2] * f_s.shape[3] > f_t.shape[2] * f_t.shape[3]:
            f_s = F.interpolate(f_s, size=f_t.shape[2:], mode="bilinear", align_corners=False)
        else:
            f_t = F.interpolate(f_t, size=f_s.shape[2:], mode="bilinear", align_corners=False)
    if f_s.shape != f_t.shape:
        raise ShapeError(
            f"features irreconcilable after projection: {tuple(f_s.shape)} vs {tuple(f_t.shape)}"
        )
    return f_s, f_t


def hint_loss(
    f_s: torch.Tensor,
    f_t: torch.Tensor,
    proj_s: nn.Module | None = None,
    proj_t: nn.Module | None = None,
    metric: str = "l2",
) -> torch.Tensor:
    """Mean elementwise distance between transformed feature maps.

    ``metric`` is ``l1`` (absolute) or ``l2`` (squared). ``None``
    projectors mean identity.
    """
    if f_s.shape[0] != f_t.shape[0]:
        raise ShapeError("student/teacher batch sizes differ")
    if proj_s is not None:
        f_s = proj_s(f_s)
    if proj_t is not None:
        f_t = proj_t(f_t)
    f_s, f_t = _align(f_s, f_t)
    if metric == "l2":
        return ((f_s - f_t) ** 2).mean()
    if metric == "l1":
        return (f_s - f_t).abs().mean()
    raise ConfigError(f"unknown hint metric {metric!r}")


def _flat(f: torch.Tensor) -> torch.Tensor:
    return f.reshape(f.shape[0], -1)


def cc_loss(f_s: torch.Tensor, f_t: torch.Tensor) -> torch.Tensor:
    """Mean squared difference between row-normalized batch Gram matrices."""
    if f_s.shape[0] != f_t.shape[0]:
        raise ShapeError("student/teacher batch sizes differ")
    n = f_s.shape[0]
    if n < 2:
        raise BatchError(f"batch correlation needs N >= 2 samples, got {n}")
    a = F.normalize(_flat(f_s), dim=1)
    b = F.normalize(_flat(f_t), dim=1)
    g_s = a @ a.t()
    g_t = b @ b.t()
    return ((g_s - g_t) ** 2).mean()


def _pairwise_distances(x: torch.Tensor) -> torch.Tensor:
    sq = (x * x).sum(dim=1)
    d2 = sq.unsqueeze(0) + sq.unsqueeze(1) - 2.0 * (x @ x.t())
    return d2.clamp_min(_EPS).sqrt()


def _angle_tensor(x: torch.Tensor) -> torch.Tensor:
    # Unit difference vectors e[j, i] = (x_i - x_j) / |x_i - x_j|; the
    # (j, i, k) entry is the cosine at vertex j between i and k.
    diff = x.unsqueeze(0) - x.unsqueeze(1)
    unit = F.normalize(diff, p=2, dim=2)
    return torch.bmm(unit, unit.transpose(1, 2))


def rkd_loss(
    f_s: torch.Tensor,
    f_t: torch.Tensor,
    distance_weight: float = 25.0,
    angle_weight: float = 50.0,
) -> torch.Tensor:
    """Relational matching of mean-normalized pairwise distances and triple angles."""
    if f_s.shape[0] != f_t.shape[0]:
        raise ShapeError("student/teacher batch sizes differ")
    n = f_s.shape[0]
    if n < 3:
        raise BatchError(f"angle relations need N >= 3 samples, got {n}")
    xs = _flat(f_s)
    xt = _flat(f_t)

    d_s = _pairwise_distances(xs)
    d_t = _pairwise_distances(xt)
    off = ~torch.eye(n, dtype=torch.bool, device=xs.device)
    d_s = d_s / d_s[off].mean().clamp_min(_EPS)
    d_t = d_t / d_t[off].mean().clamp_min(_EPS)
    dist_term = F.smooth_l1_loss(d_s, d_t)

    angle_term = F.smooth_l1_loss(_angle_tensor(xs), _angle_tensor(xt))
    return distance_weight * dist_term + angle_weight * angle_term
