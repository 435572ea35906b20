from .augment import build_augmentation
from .datasets import (
    Cifar100Archive,
    FolderTree,
    ImagesOnly,
    SubsetView,
    build_dataset,
    dataset_stats,
    load_indices,
    save_indices,
    stratified_indices,
    stratified_subset,
)
from .mixing import MixedBatch, apply_cutmix, apply_mixup, mix_batch, one_hot_rows
from .sampling import RepeatedAugSampler, derive_seed, seed_everything

__all__ = [
    "build_augmentation",
    "Cifar100Archive",
    "FolderTree",
    "ImagesOnly",
    "SubsetView",
    "build_dataset",
    "dataset_stats",
    "stratified_indices",
    "stratified_subset",
    "save_indices",
    "load_indices",
    "MixedBatch",
    "apply_mixup",
    "apply_cutmix",
    "mix_batch",
    "one_hot_rows",
    "RepeatedAugSampler",
    "derive_seed",
    "seed_everything",
]
