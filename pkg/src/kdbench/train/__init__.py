from .ema import EmaShadow, ema_update
from .loop import (
    EvalResult,
    Trainer,
    TrainResult,
    default_device,
    evaluate,
    parameters_fingerprint,
    train_distill,
    two_stage_distill,
)
from .manifest import MetricsRecord, RunManifest, append_metrics, read_manifest, read_metrics, spec_hash
from .optim import Lamb, ScheduleState, build_optimizer, lr_at, param_groups

__all__ = [
    "EmaShadow",
    "ema_update",
    "EvalResult",
    "Trainer",
    "TrainResult",
    "default_device",
    "evaluate",
    "parameters_fingerprint",
    "train_distill",
    "two_stage_distill",
    "MetricsRecord",
    "RunManifest",
    "append_metrics",
    "read_manifest",
    "read_metrics",
    "spec_hash",
    "Lamb",
    "ScheduleState",
    "build_optimizer",
    "lr_at",
    "param_groups",
]
