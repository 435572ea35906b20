"""Config-file parsing and serialization.

A job config is a human-readable YAML key tree whose keys mirror the
dataclass field names. ``recipe`` may be a builtin strategy name or an
inline mapping (optionally ``{base: A2, <field overrides>}``). CLI
overrides use dotted paths: ``--set recipe.base_lr=3e-3``.
"""
from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError, ConfigKeyError
from .recipes import (
    DatasetRef,
    DistillJobSpec,
    SubsetSpec,
    TrainingRecipe,
    UnlabeledStage,
    builtin_recipe,
    check_job,
)


def _dataset_from_dict(d: dict[str, Any]) -> DatasetRef:
    known = {f.name for f in dataclasses.fields(DatasetRef)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown dataset keys: {sorted(unknown)}")
    d = dict(d)
    for key in ("mean", "std"):
        if key in d and d[key] is not None:
            d[key] = tuple(d[key])
    return DatasetRef(**d)


def recipe_from_value(value: Any) -> TrainingRecipe:
    """Build a recipe from a builtin name or an inline mapping."""
    if isinstance(value, str):
        return builtin_recipe(value)
    if not isinstance(value, dict):
        raise ConfigError(f"recipe must be a name or mapping, got {type(value).__name__}")
    value = dict(value)
    base_name = value.pop("base", None)
    if base_name is not None:
        recipe = builtin_recipe(base_name)
    else:
        required = {"name", "teacher_resolution", "student_resolution", "batch_size",
                    "optimizer", "base_lr", "epochs"}
        missing = required - set(value)
        if missing:
            raise ConfigError(f"inline recipe missing keys: {sorted(missing)}")
        recipe = None
    known = {f.name for f in dataclasses.fields(TrainingRecipe)}
    unknown = set(value) - known
    if unknown:
        raise ConfigKeyError(f"unknown recipe keys: {sorted(unknown)}")
    for key in ("rand_augment", "betas"):
        if key in value and value[key] is not None:
            value[key] = tuple(value[key])
    if recipe is None:
        return TrainingRecipe(**value)
    for key, val in value.items():
        setattr(recipe, key, val)
    return recipe


def job_from_dict(d: dict[str, Any]) -> DistillJobSpec:
    """Materialize a job spec from a parsed config tree and validate it."""
    d = dict(d)
    try:
        dataset = _dataset_from_dict(d.pop("dataset"))
        recipe = recipe_from_value(d.pop("recipe"))
    except KeyError as exc:
        raise ConfigError(f"config missing required section {exc}") from None
    subset = d.pop("subset", None)
    if subset is not None:
        subset = SubsetSpec(**subset)
    unlabeled = d.pop("unlabeled_stage", None)
    if unlabeled is not None:
        unlabeled = UnlabeledStage(
            pool=_dataset_from_dict(unlabeled["pool"]),
            iterations=int(unlabeled["iterations"]),
        )
    if "hint_layer_pairs" in d and d["hint_layer_pairs"]:
        d["hint_layer_pairs"] = [tuple(p) for p in d["hint_layer_pairs"]]
    known = {f.name for f in dataclasses.fields(DistillJobSpec)}
    unknown = set(d) - known
    if unknown:
        raise ConfigKeyError(f"unknown config keys: {sorted(unknown)}")
    spec = DistillJobSpec(
        dataset=dataset, recipe=recipe, subset=subset, unlabeled_stage=unlabeled, **d
    )
    return check_job(spec)


def job_to_dict(spec: DistillJobSpec) -> dict[str, Any]:
    """Serialize a job spec back to a plain key tree (inverse of job_from_dict)."""

    def clean(obj: Any) -> Any:
        if dataclasses.is_dataclass(obj):
            return {k: clean(v) for k, v in dataclasses.asdict(obj).items()}
        if isinstance(obj, tuple):
            return [clean(v) for v in obj]
        if isinstance(obj, list):
            return [clean(v) for v in obj]
        return obj

    return clean(spec)


def load_job(path: str | Path, overrides: dict[str, Any] | None = None) -> DistillJobSpec:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        tree = yaml.safe_load(fh)
    if not isinstance(tree, dict):
        raise ConfigError(f"config root must be a mapping: {path}")
    spec = job_from_dict(tree)
    if overrides:
        from .recipes import merge_overrides

        spec = merge_overrides(spec, overrides)
    if not spec.name:
        spec.name = path.stem
    return spec


def save_job(spec: DistillJobSpec, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(job_to_dict(spec), fh, sort_keys=False)


def parse_set_args(pairs: list[str]) -> dict[str, Any]:
    """Parse ``key.path=value`` strings; values go through YAML scalar rules."""
    overrides: dict[str, Any] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigKeyError(f"override must look like path=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        value = yaml.safe_load(raw)
        if isinstance(value, str):
            # YAML 1.1 reads bare scientific notation like 5e-3 as a string
            try:
                value = float(value)
            except ValueError:
                pass
        overrides[key.strip()] = value
    return overrides
