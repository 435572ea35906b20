"""Label losses and logits-based distillation losses.

All functions are pure and differentiable w.r.t. the student logits.
Targets may be class indices (N,) or mixed-weight rows (N, K); the
latter is what mixup/cutmix produce. Reduction is always the arithmetic
mean over the batch so values are batch-size invariant.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from ..errors import BatchError, ConfigError, NumericError, ShapeError, TargetError
from ..recipes import DistillJobSpec

BKL_CLAMP = 1e-6
_VAR_TOL = 1e-12


@dataclass
class LossBreakdown:
    """A composite loss with its reported pieces (still differentiable)."""

    total: torch.Tensor
    hard: torch.Tensor
    soft: torch.Tensor
    components: dict[str, torch.Tensor] = field(default_factory=dict)

    def scalars(self) -> dict[str, float]:
        out = {"total": float(self.total), "hard": float(self.hard), "soft": float(self.soft)}
        out.update({k: float(v) for k, v in self.components.items()})
        return out


def _check_logits(logits: torch.Tensor, name: str = "logits") -> torch.Tensor:
    if logits.dim() != 2:
        raise ShapeError(f"{name} must be (N, K), got shape {tuple(logits.shape)}")
    if logits.shape[1] < 2:
        raise ShapeError(f"{name} needs K >= 2 classes, got {logits.shape[1]}")
    if not torch.isfinite(logits).all():
        raise NumericError(f"{name} contains non-finite entries")
    return logits


def _check_pair(student: torch.Tensor, teacher: torch.Tensor) -> None:
    _check_logits(student, "student logits")
    _check_logits(teacher, "teacher logits")
    if student.shape != teacher.shape:
        raise ShapeError(
            f"student/teacher shapes differ: {tuple(student.shape)} vs {tuple(teacher.shape)}"
        )


def as_weight_rows(
    targets: torch.Tensor, num_classes: int, dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    """Convert index targets to one-hot rows; pass weight rows through."""
    if targets.dim() == 1:
        if targets.numel() and (targets.min() < 0 or targets.max() >= num_classes):
            raise TargetError(
                f"target index out of range [0, {num_classes}): "
                f"min {int(targets.min())}, max {int(targets.max())}"
            )
        return F.one_hot(targets.long(), num_classes).to(dtype)
    if targets.dim() == 2:
        if targets.shape[1] != num_classes:
            raise ShapeError(
                f"target rows have {targets.shape[1]} classes, logits have {num_classes}"
            )
        return targets.to(dtype)
    raise ShapeError(f"targets must be (N,) indices or (N, K) rows, got {tuple(targets.shape)}")


def dominant_class(targets: torch.Tensor, num_classes: int) -> torch.Tensor:
    """Index targets for losses that need a single target class.

    Mixed-weight rows collapse to the dominant-weight class; ties break
    toward the lower class index (argmax returns the first maximum).
    """
    if targets.dim() == 1:
        return targets.long()
    return as_weight_rows(targets, num_classes).argmax(dim=1)


def softmax_temperature(logits: torch.Tensor, tau: float) -> torch.Tensor:
    """Row-wise softmax of ``logits / tau``, stabilized by row-max subtraction."""
    if tau <= 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")
    _check_logits(logits)
    scaled = logits / tau
    scaled = scaled - scaled.max(dim=1, keepdim=True).values
    return F.softmax(scaled, dim=1)


def ce_loss(
    student_logits: torch.Tensor, targets: torch.Tensor, smoothing: float = 0.0
) -> torch.Tensor:
    """Cross-entropy against (possibly mixed) target rows with label smoothing.

    The smoothed row is ``(1 - eps) * q + eps / K``, applied after any
    mixing, so mixed rows keep summing to one.
    """
    if not 0 <= smoothing < 1:
        raise ConfigError(f"smoothing must be in [0, 1), got {smoothing}")
    _check_logits(student_logits, "student logits")
    n, k = student_logits.shape
    q = as_weight_rows(targets, k, student_logits.dtype)
    if q.dim() == 2 and q.numel():
        sums = q.sum(dim=1)
        if (sums - 1.0).abs().max() > 1e-4:
            raise TargetError("CE target rows must sum to 1")
    if smoothing > 0:
        q = (1.0 - smoothing) * q + smoothing / k
    logp = F.log_softmax(student_logits, dim=1)
    return -(q * logp).sum(dim=1).mean()


def bce_loss(
    student_logits: torch.Tensor, targets: torch.Tensor, smoothing: float = 0.0
) -> torch.Tensor:
    """Per-class binary cross-entropy, averaged over all N*K entries.

    Mixed targets enter directly as per-class weights in [0, 1].
    """
    _check_logits(student_logits, "student logits")
    n, k = student_logits.shape
    t = as_weight_rows(targets, k, student_logits.dtype)
    if t.numel() and (t.min() < 0 or t.max() > 1):
        raise TargetError("BCE target weights must lie in [0, 1]")
    if smoothing > 0:
        t = (1.0 - smoothing) * t + smoothing / k
    return F.binary_cross_entropy_with_logits(student_logits, t, reduction="mean")


def kl_soft_loss(
    student_logits: torch.Tensor, teacher_logits: torch.Tensor, tau: float = 1.0
) -> torch.Tensor:
    """Temperature-scaled KL(teacher || student), mean over the batch.

    The tau^2 factor keeps the gradient magnitude stable across
    temperatures.
    """
    _check_pair(student_logits, teacher_logits)
    if tau <= 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")
    logp_s = F.log_softmax(student_logits / tau, dim=1)
    logp_t = F.log_softmax(teacher_logits / tau, dim=1)
    p_t = logp_t.exp()
    kl = (p_t * (logp_t - logp_s)).sum(dim=1)
    return tau * tau * kl.mean()


def bkl_loss(
    student_logits: torch.Tensor, teacher_logits: torch.Tensor, tau: float = 1.0
) -> torch.Tensor:
    """Per-class binary KL summed over the label space, mean over the batch.

    Probabilities are softmax marginals (see design notes), clamped to
    [1e-6, 1 - 1e-6] before the binary divergences.
    """
    _check_pair(student_logits, teacher_logits)
    p_s = softmax_temperature(student_logits, tau).clamp(BKL_CLAMP, 1.0 - BKL_CLAMP)
    p_t = softmax_temperature(teacher_logits, tau).clamp(BKL_CLAMP, 1.0 - BKL_CLAMP)
    per_class = p_t * (p_t / p_s).log() + (1.0 - p_t) * ((1.0 - p_t) / (1.0 - p_s)).log()
    return per_class.sum(dim=1).mean()


def _label_loss(
    kind: str, student_logits: torch.Tensor, targets: torch.Tensor, smoothing: float
) -> torch.Tensor:
    if kind == "ce":
        return ce_loss(student_logits, targets, smoothing)
    if kind == "bce":
        return bce_loss(student_logits, targets, smoothing)
    if kind == "none":
        return student_logits.new_zeros(())
    raise ConfigError(f"unknown label loss {kind!r}")


def vanilla_kd_loss(
    student_logits: torch.Tensor,
    teacher_logits: torch.Tensor,
    targets: torch.Tensor,
    spec: DistillJobSpec,
) -> LossBreakdown:
    """The composite loss ``alpha * hard + (1 - alpha) * soft``.

    The hard component is the recipe's label loss (CE/BCE or zero when
    disabled); the soft component is KL or BKL at the job temperature.
    """
    _check_pair(student_logits, teacher_logits)
    label_kind = spec.recipe.label_loss
    if label_kind == "none" and spec.alpha > 0:
        raise ConfigError("label_loss 'none' requires alpha = 0")
    hard = _label_loss(label_kind, student_logits, targets, spec.recipe.label_smoothing)
    if spec.soft_loss == "bkl":
        soft = bkl_loss(student_logits, teacher_logits, spec.temperature)
    else:
        soft = kl_soft_loss(student_logits, teacher_logits, spec.temperature)
    total = spec.alpha * hard + (1.0 - spec.alpha) * soft
    return LossBreakdown(total=total, hard=hard, soft=soft)


def _binary_kl(p: torch.Tensor, q: torch.Tensor) -> torch.Tensor:
    # clamp must stay representable next to 1.0 in the working dtype,
    # otherwise saturated probabilities produce 0 * log(0)
    eps = max(float(torch.finfo(p.dtype).eps), _VAR_TOL)
    p = p.clamp(eps, 1.0 - eps)
    q = q.clamp(eps, 1.0 - eps)
    return p * (p / q).log() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).log()


def dkd_loss(
    student_logits: torch.Tensor,
    teacher_logits: torch.Tensor,
    target_indices: torch.Tensor,
    dkd_alpha: float = 1.0,
    dkd_beta: float = 2.0,
    tau: float = 1.0,
) -> LossBreakdown:
    """Decoupled distillation: weighted target and non-target terms.

    The target term is the binary KL between teacher and student
    (p_target, 1 - p_target) pairs; the non-target term is the KL
    between the distributions renormalized to exclude the target class.
    Both carry the tau^2 factor. Total is
    ``dkd_alpha * tckd + dkd_beta * nckd``.
    """
    _check_pair(student_logits, teacher_logits)
    n, k = student_logits.shape
    if k < 2:
        raise ConfigError(f"decoupled loss needs K >= 2 classes, got {k}")
    idx = dominant_class(target_indices, k)
    if idx.shape[0] != n:
        raise ShapeError(f"got {idx.shape[0]} targets for {n} samples")
    if idx.numel() and (idx.min() < 0 or idx.max() >= k):
        raise TargetError(f"target index out of range [0, {k})")

    p_s = softmax_temperature(student_logits, tau)
    p_t = softmax_temperature(teacher_logits, tau)
    col = idx.view(-1, 1)
    pt_target = p_t.gather(1, col).squeeze(1)
    ps_target = p_s.gather(1, col).squeeze(1)
    tckd = tau * tau * _binary_kl(pt_target, ps_target).mean()

    # Non-target distributions via masked log-softmax: the target logit is
    # pushed to -inf so softmax renormalizes over the remaining classes.
    mask = torch.zeros_like(student_logits, dtype=torch.bool)
    mask.scatter_(1, col, True)
    neg_inf = torch.finfo(student_logits.dtype).min
    s_masked = (student_logits / tau).masked_fill(mask, neg_inf)
    t_masked = (teacher_logits / tau).masked_fill(mask, neg_inf)
    logq_s = F.log_softmax(s_masked, dim=1)
    logq_t = F.log_softmax(t_masked, dim=1)
    q_t = logq_t.exp()
    per_sample = torch.where(mask, torch.zeros_like(q_t), q_t * (logq_t - logq_s)).sum(dim=1)
    nckd = tau * tau * per_sample.mean()

    total = dkd_alpha * tckd + dkd_beta * nckd
    return LossBreakdown(
        total=total,
        hard=total.new_zeros(()),
        soft=total,
        components={"tckd": tckd, "nckd": nckd},
    )


def pearson_row_terms(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Per-row ``1 - pearson(a_i, b_i)``; zero-variance rows contribute 0."""
    a0 = a - a.mean(dim=1, keepdim=True)
    b0 = b - b.mean(dim=1, keepdim=True)
    na = a0.norm(dim=1)
    nb = b0.norm(dim=1)
    ok = (na > _VAR_TOL) & (nb > _VAR_TOL)
    denom = (na * nb).clamp_min(_VAR_TOL)
    rho = (a0 * b0).sum(dim=1) / denom
    return torch.where(ok, 1.0 - rho, torch.zeros_like(rho))


def dist_loss(
    student_logits: torch.Tensor,
    teacher_logits: torch.Tensor,
    targets: torch.Tensor,
    dist_beta: float = 1.0,
    dist_gamma: float = 1.0,
    tau: float = 1.0,
    label_loss: str = "ce",
    smoothing: float = 0.0,
) -> LossBreakdown:
    """Correlation-matching distillation plus the recipe's label loss.

    The inter term matches per-sample probability rows, the intra term
    matches per-class columns across the batch (both as one minus the
    Pearson correlation). Total is
    ``cls + dist_beta * inter + dist_gamma * intra``.
    """
    _check_pair(student_logits, teacher_logits)
    n, _ = student_logits.shape
    if n < 2:
        raise BatchError(f"intra-class correlation needs N >= 2 samples, got {n}")
    y_s = softmax_temperature(student_logits, tau)
    y_t = softmax_temperature(teacher_logits, tau)
    inter = tau * tau * pearson_row_terms(y_s, y_t).mean()
    intra = tau * tau * pearson_row_terms(y_s.t(), y_t.t()).mean()
    cls = _label_loss(label_loss, student_logits, targets, smoothing)
    total = cls + dist_beta * inter + dist_gamma * intra
    return LossBreakdown(
        total=total,
        hard=cls,
        soft=dist_beta * inter + dist_gamma * intra,
        components={"inter": inter, "intra": intra},
    )
