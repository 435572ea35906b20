from .logits import (
    LossBreakdown,
    bce_loss,
    bkl_loss,
    ce_loss,
    dist_loss,
    dkd_loss,
    kl_soft_loss,
    pearson_row_terms,
    softmax_temperature,
    vanilla_kd_loss,
)
from .hint import ProjectorSpec, build_projector, cc_loss, hint_loss, rkd_loss

__all__ = [
    "LossBreakdown",
    "softmax_temperature",
    "ce_loss",
    "bce_loss",
    "kl_soft_loss",
    "pearson_row_terms",
    "bkl_loss",
    "vanilla_kd_loss",
    "dkd_loss",
    "dist_loss",
    "ProjectorSpec",
    "build_projector",
    "hint_loss",
    "cc_loss",
    "rkd_loss",
]
