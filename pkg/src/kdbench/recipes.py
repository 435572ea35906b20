"""Training-strategy vocabulary and experiment specifications.

The four builtin strategies (A1, A2, B, C) are the exact published
recipes; everything else here is plumbing around them: validation,
dotted-path overrides for grid sweeps, and the dataclasses a single
distillation job is described by.
"""
from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field, fields
from typing import Any, Optional

from .errors import ConfigKeyError, NotFoundError, ValidationError

OPTIMIZERS = ("lamb", "adamw", "sgd")
LABEL_LOSSES = ("ce", "bce", "none")
SOFT_LOSSES = ("kl", "bkl")
METHODS = ("kd", "dkd", "dist", "hint", "cc", "rkd")
HINT_METHODS = ("hint", "cc", "rkd")
LR_SCHEDULES = ("cosine",)

# Reference defaults of the optimizers the strategies name; the tables
# only name the optimizer itself.
LAMB_BETAS = (0.9, 0.999)
LAMB_EPS = 1e-6
ADAMW_BETAS = (0.9, 0.999)
SGD_MOMENTUM = 0.9
EMA_DECAY_DEFAULT = 0.9999


@dataclass
class TrainingRecipe:
    """One row of the strategy tables: optimizer, schedule and augmentation stack."""

    name: str
    teacher_resolution: int
    student_resolution: int
    batch_size: int
    optimizer: str
    base_lr: float
    epochs: int
    lr_schedule: str = "cosine"
    warmup_epochs: int = 0
    amp: bool = False
    ema: bool = False
    ema_decay: float = EMA_DECAY_DEFAULT
    label_loss: str = "ce"
    weight_decay: float = 0.0
    label_smoothing: float = 0.0
    drop_path_rate: float = 0.0
    repeated_aug_count: int = 1
    hflip: bool = False
    random_resized_crop: bool = False
    rand_augment: Optional[tuple[int, float]] = None  # (magnitude, probability)
    auto_augment: bool = False
    random_erasing_prob: float = 0.0
    mixup_alpha: float = 0.0
    cutmix_alpha: float = 0.0
    momentum: float = SGD_MOMENTUM
    betas: tuple[float, float] = ADAMW_BETAS
    opt_eps: float = 1e-8


@dataclass
class SubsetSpec:
    """Stratified-subset request for scale ablations."""

    fraction: float
    stratified: bool = True
    seed: int = 0


@dataclass
class DatasetRef:
    """Where a dataset lives and what it contains."""

    name: str
    root: str
    kind: str = "cifar100"  # cifar100 | folder | synthetic-cifar100
    split: str = "train"
    class_count: int = 100
    resolution: int = 32
    mean: tuple[float, ...] = ()
    std: tuple[float, ...] = ()


@dataclass
class UnlabeledStage:
    """First-phase distillation on an auxiliary pool, soft labels only."""

    pool: DatasetRef
    iterations: int


@dataclass
class DistillJobSpec:
    """One experiment: who teaches whom, with which loss and recipe."""

    teacher: str
    student: str
    dataset: DatasetRef
    recipe: TrainingRecipe
    method: str = "kd"
    alpha: float = 0.5
    temperature: float = 1.0
    soft_loss: str = "kl"
    dkd_alpha: float = 1.0
    dkd_beta: float = 2.0
    dist_beta: float = 1.0
    dist_gamma: float = 1.0
    hint_layer_pairs: list[tuple[str, str]] = field(default_factory=list)
    hint_weight: float = 1.0
    subset: Optional[SubsetSpec] = None
    seed: int = 0
    unlabeled_stage: Optional[UnlabeledStage] = None
    teacher_checkpoint: Optional[str] = None
    student_checkpoint: Optional[str] = None
    name: str = ""


def _common_a() -> dict[str, Any]:
    # Shared settings of the A-family strategies.
    return dict(
        teacher_resolution=224,
        student_resolution=224,
        batch_size=2048,
        optimizer="lamb",
        base_lr=5e-3,
        lr_schedule="cosine",
        warmup_epochs=5,
        amp=True,
        ema=False,
        label_loss="bce",
        drop_path_rate=0.05,
        repeated_aug_count=3,
        hflip=True,
        random_resized_crop=True,
        rand_augment=(7, 0.5),
        cutmix_alpha=1.0,
        betas=LAMB_BETAS,
        opt_eps=LAMB_EPS,
    )


def _builtin_recipes() -> dict[str, TrainingRecipe]:
    a2 = TrainingRecipe(
        name="A2",
        epochs=300,
        weight_decay=0.03,
        label_smoothing=0.0,
        mixup_alpha=0.1,
        **_common_a(),
    )
    a1 = TrainingRecipe(
        name="A1",
        epochs=600,
        weight_decay=0.01,
        label_smoothing=0.1,
        mixup_alpha=0.2,
        **_common_a(),
    )
    b = TrainingRecipe(
        name="B",
        teacher_resolution=224,
        student_resolution=224,
        batch_size=1024,
        optimizer="adamw",
        base_lr=1e-3,
        epochs=300,
        lr_schedule="cosine",
        warmup_epochs=20,
        amp=True,
        label_loss="ce",
        weight_decay=5e-2,
        hflip=True,
        random_erasing_prob=0.25,
        auto_augment=False,
        rand_augment=(7, 0.5),
        mixup_alpha=0.1,
        cutmix_alpha=1.0,
        betas=ADAMW_BETAS,
    )
    c = TrainingRecipe(
        name="C",
        teacher_resolution=32,
        student_resolution=32,
        batch_size=512,
        optimizer="sgd",
        base_lr=5e-2,
        epochs=2400,
        lr_schedule="cosine",
        warmup_epochs=0,
        amp=False,
        label_loss="ce",
        weight_decay=5e-4,
        hflip=True,
        random_erasing_prob=0.0,
        auto_augment=True,
        rand_augment=None,
        mixup_alpha=0.1,
        cutmix_alpha=0.0,
        momentum=SGD_MOMENTUM,
    )
    return {"A1": a1, "A2": a2, "B": b, "C": c}


BUILTIN_RECIPE_NAMES = ("A1", "A2", "B", "C")


def builtin_recipe(name: str) -> TrainingRecipe:
    """Return a fresh copy of a builtin strategy by name."""
    recipes = _builtin_recipes()
    if name not in recipes:
        raise NotFoundError(
            f"unknown recipe {name!r}; valid names: {', '.join(BUILTIN_RECIPE_NAMES)}"
        )
    return recipes[name]


def validate_recipe(recipe: TrainingRecipe) -> list[str]:
    """Check every recipe invariant; violations come back as strings, not exceptions."""
    v: list[str] = []
    if recipe.base_lr <= 0:
        v.append(f"base_lr must be > 0, got {recipe.base_lr}")
    if recipe.batch_size < 1:
        v.append(f"batch_size must be >= 1, got {recipe.batch_size}")
    if recipe.epochs < 0:
        v.append(f"epochs must be >= 0, got {recipe.epochs}")
    if recipe.warmup_epochs < 0:
        v.append(f"warmup_epochs must be >= 0, got {recipe.warmup_epochs}")
    elif recipe.epochs > 0 and recipe.warmup_epochs >= recipe.epochs:
        # epochs == 0 is the evaluation-only case and skips this rule
        v.append(
            f"warmup_epochs ({recipe.warmup_epochs}) must be < epochs ({recipe.epochs})"
        )
    if recipe.optimizer not in OPTIMIZERS:
        v.append(f"optimizer must be one of {OPTIMIZERS}, got {recipe.optimizer!r}")
    if recipe.lr_schedule not in LR_SCHEDULES:
        v.append(f"lr_schedule must be one of {LR_SCHEDULES}, got {recipe.lr_schedule!r}")
    if recipe.label_loss not in LABEL_LOSSES:
        v.append(f"label_loss must be one of {LABEL_LOSSES}, got {recipe.label_loss!r}")
    if recipe.weight_decay < 0:
        v.append(f"weight_decay must be >= 0, got {recipe.weight_decay}")
    if not 0 <= recipe.label_smoothing < 1:
        v.append(f"label_smoothing must be in [0, 1), got {recipe.label_smoothing}")
    if not 0 <= recipe.drop_path_rate < 1:
        v.append(f"drop_path_rate must be in [0, 1), got {recipe.drop_path_rate}")
    if not 0 <= recipe.ema_decay < 1:
        v.append(f"ema_decay must be in [0, 1), got {recipe.ema_decay}")
    if recipe.repeated_aug_count < 1:
        v.append(f"repeated_aug_count must be >= 1, got {recipe.repeated_aug_count}")
    if not 0 <= recipe.random_erasing_prob <= 1:
        v.append(f"random_erasing_prob must be in [0, 1], got {recipe.random_erasing_prob}")
    if recipe.mixup_alpha < 0:
        v.append(f"mixup_alpha must be >= 0, got {recipe.mixup_alpha}")
    if recipe.cutmix_alpha < 0:
        v.append(f"cutmix_alpha must be >= 0, got {recipe.cutmix_alpha}")
    if recipe.rand_augment is not None:
        mag, prob = recipe.rand_augment
        if not 0 <= prob <= 1:
            v.append(f"rand_augment probability must be in [0, 1], got {prob}")
        if int(mag) != mag or mag < 0:
            v.append(f"rand_augment magnitude must be a non-negative integer, got {mag}")
        if recipe.auto_augment:
            v.append("rand_augment and auto_augment are mutually exclusive")
    if recipe.teacher_resolution < 1 or recipe.student_resolution < 1:
        v.append("resolutions must be positive")
    return v


def validate_job(spec: DistillJobSpec) -> list[str]:
    """Recipe invariants plus the cross-field rules a job adds on top."""
    v = validate_recipe(spec.recipe)
    if spec.method not in METHODS:
        v.append(f"method must be one of {METHODS}, got {spec.method!r}")
    if not 0 <= spec.alpha <= 1:
        v.append(f"alpha must be in [0, 1], got {spec.alpha}")
    if spec.temperature <= 0:
        v.append(f"temperature must be > 0, got {spec.temperature}")
    if spec.soft_loss not in SOFT_LOSSES:
        v.append(f"soft_loss must be one of {SOFT_LOSSES}, got {spec.soft_loss!r}")
    if spec.hint_weight < 0:
        v.append(f"hint_weight must be >= 0, got {spec.hint_weight}")
    if spec.method in HINT_METHODS and not spec.hint_layer_pairs:
        v.append(f"method {spec.method!r} requires non-empty hint_layer_pairs")
    if spec.alpha > 0 and spec.recipe.label_loss == "none" and spec.method == "kd":
        v.append("label_loss 'none' requires alpha = 0 (pure soft distillation)")
    if spec.dataset.class_count < 2:
        v.append(f"dataset class_count must be >= 2, got {spec.dataset.class_count}")
    if spec.subset is not None and not 0 < spec.subset.fraction <= 1:
        v.append(f"subset fraction must be in (0, 1], got {spec.subset.fraction}")
    if spec.unlabeled_stage is not None and spec.unlabeled_stage.iterations < 0:
        v.append("unlabeled_stage iterations must be >= 0")
    return v


def check_job(spec: DistillJobSpec) -> DistillJobSpec:
    """Validate a job spec, raising ValidationError on any violation."""
    violations = validate_job(spec)
    if violations:
        raise ValidationError(violations)
    return spec


def _set_path(obj: Any, path: list[str], value: Any, full: str) -> None:
    head, rest = path[0], path[1:]
    if not dataclasses.is_dataclass(obj):
        raise ConfigKeyError(f"override path {full!r}: {head!r} is not a field container")
    names = {f.name: f for f in fields(obj)}
    if head not in names:
        raise ConfigKeyError(
            f"override path {full!r}: unknown field {head!r} on {type(obj).__name__}"
        )
    if rest:
        child = getattr(obj, head)
        if child is None:
            raise ConfigKeyError(f"override path {full!r}: {head!r} is not set")
        _set_path(child, rest, value, full)
    else:
        setattr(obj, head, _coerce(value, getattr(obj, head)))


def _coerce(value: Any, current: Any) -> Any:
    """Mild type coercion so string overrides land on typed fields."""
    if isinstance(current, bool):
        if isinstance(value, str):
            return value.lower() in ("1", "true", "yes", "on")
        return bool(value)
    if isinstance(current, int) and not isinstance(current, bool) and not isinstance(value, (list, tuple, dict)):
        return int(float(value))
    if isinstance(current, float) and not isinstance(value, (list, tuple, dict)):
        return float(value)
    if isinstance(current, tuple) and isinstance(value, (list, tuple)):
        return tuple(value)
    return value


def merge_overrides(base: DistillJobSpec, overrides: dict[str, Any]) -> DistillJobSpec:
    """Copy *base*, apply dotted-path overrides, and re-validate.

    Paths mirror the field names, e.g. ``recipe.base_lr`` or ``dkd_beta``.
    """
    spec = copy.deepcopy(base)
    for key, value in overrides.items():
        parts = key.split(".")
        _set_path(spec, parts, value, key)
    violations = validate_job(spec)
    if violations:
        raise ValidationError(violations)
    return spec
