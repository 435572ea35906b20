"""Dataset ingestion and stratified subsetting.

Two on-disk layouts are supported: the CIFAR-100 python archive
(pickled ``train``/``test``/``meta`` files) and a folder-per-class
image tree. Subset index lists persist as newline-delimited integers so
every subset run is auditable.
"""
from __future__ import annotations

import pickle
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image
from torch.utils.data import Dataset

from ..errors import DataError, SubsetError
from ..recipes import DatasetRef, SubsetSpec

CIFAR100_MEAN = (0.5071, 0.4865, 0.4409)
CIFAR100_STD = (0.2673, 0.2564, 0.2762)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def dataset_stats(ref: DatasetRef) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Per-channel normalization constants, from the ref or conventional defaults."""
    if ref.mean and ref.std:
        return tuple(ref.mean), tuple(ref.std)
    if ref.kind == "cifar100" or ref.resolution <= 64:
        return CIFAR100_MEAN, CIFAR100_STD
    return IMAGENET_MEAN, IMAGENET_STD


class Cifar100Archive(Dataset):
    """Reader for the pickled CIFAR-100 archive layout."""

    def __init__(self, root: str | Path, split: str = "train", transform=None):
        root = Path(root)
        if (root / "cifar-100-python").is_dir():
            root = root / "cifar-100-python"
        fname = "train" if split == "train" else "test"
        path = root / fname
        if not path.exists():
            raise DataError(f"CIFAR-100 archive file not found: {path}")
        with open(path, "rb") as fh:
            batch = pickle.load(fh, encoding="bytes")
        data = batch[b"data"]
        self.images = np.asarray(data, dtype=np.uint8).reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
        self.targets = list(batch[b"fine_labels"])
        self.transform = transform
        meta_path = root / "meta"
        self.class_names: list[str] = []
        if meta_path.exists():
            with open(meta_path, "rb") as fh:
                meta = pickle.load(fh, encoding="bytes")
            self.class_names = [n.decode() for n in meta.get(b"fine_label_names", [])]

    def __len__(self) -> int:
        return len(self.targets)

    def __getitem__(self, idx: int):
        img = Image.fromarray(self.images[idx])
        if self.transform is not None:
            img = self.transform(img)
        return img, self.targets[idx]


class FolderTree(Dataset):
    """Folder-per-class image tree; classes are the sorted directory names."""

    EXTS = (".png", ".jpg", ".jpeg", ".bmp", ".webp")

    def __init__(self, root: str | Path, transform=None):
        root = Path(root)
        if not root.is_dir():
            raise DataError(f"dataset folder not found: {root}")
        classes = sorted(d.name for d in root.iterdir() if d.is_dir())
        if not classes:
            raise DataError(f"no class folders under {root}")
        self.class_names = classes
        self.samples: list[tuple[Path, int]] = []
        for label, cls in enumerate(classes):
            for p in sorted((root / cls).rglob("*")):
                if p.suffix.lower() in self.EXTS:
                    self.samples.append((p, label))
        if not self.samples:
            raise DataError(f"no images found under {root}")
        self.targets = [label for _, label in self.samples]
        self.transform = transform

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, idx: int):
        path, label = self.samples[idx]
        img = Image.open(path).convert("RGB")
        if self.transform is not None:
            img = self.transform(img)
        return img, label


class SubsetView(Dataset):
    """Index-based subset that keeps ``targets`` available for stratification."""

    def __init__(self, base: Dataset, indices: Sequence[int]):
        self.base = base
        self.indices = list(indices)
        base_targets = getattr(base, "targets", None)
        self.targets = [base_targets[i] for i in self.indices] if base_targets else None
        self.class_names = getattr(base, "class_names", [])

    def __len__(self) -> int:
        return len(self.indices)

    def __getitem__(self, idx: int):
        return self.base[self.indices[idx]]


class ImagesOnly(Dataset):
    """Projection of a labeled dataset to its images (unlabeled pools)."""

    def __init__(self, base: Dataset):
        if len(base) == 0:
            raise DataError("unlabeled pool is empty")
        self.base = base

    def __len__(self) -> int:
        return len(self.base)

    def __getitem__(self, idx: int):
        item = self.base[idx]
        return item[0] if isinstance(item, (tuple, list)) else item


def build_dataset(ref: DatasetRef, split: Optional[str] = None, transform=None) -> Dataset:
    split = split or ref.split
    if ref.kind == "cifar100":
        ds = Cifar100Archive(ref.root, split=split, transform=transform)
    elif ref.kind == "folder":
        root = Path(ref.root)
        split_dir = root / split
        ds = FolderTree(split_dir if split_dir.is_dir() else root, transform=transform)
    else:
        raise DataError(f"unknown dataset kind {ref.kind!r}")
    return ds


def stratified_indices(targets: Sequence[int], spec: SubsetSpec) -> list[int]:
    """Deterministic subset indices; per-class counts are round(fraction * n_c)."""
    if not 0 < spec.fraction <= 1:
        raise SubsetError(f"fraction must be in (0, 1], got {spec.fraction}")
    rng = np.random.default_rng(spec.seed)
    targets = np.asarray(targets)
    if spec.fraction == 1.0:
        return list(range(len(targets)))
    if not spec.stratified:
        count = int(round(spec.fraction * len(targets)))
        picked = rng.choice(len(targets), size=max(count, 1), replace=False)
        return sorted(int(i) for i in picked)
    picked_all: list[int] = []
    for cls in np.unique(targets):
        cls_idx = np.flatnonzero(targets == cls)
        count = int(round(spec.fraction * len(cls_idx)))
        if count < 1:
            raise SubsetError(
                f"fraction {spec.fraction} keeps no samples of class {int(cls)} "
                f"({len(cls_idx)} available)"
            )
        picked = rng.choice(cls_idx, size=count, replace=False)
        picked_all.extend(int(i) for i in picked)
    return sorted(picked_all)


def stratified_subset(dataset: Dataset, spec: SubsetSpec) -> SubsetView:
    targets = getattr(dataset, "targets", None)
    if targets is None:
        raise SubsetError("dataset exposes no targets; cannot stratify")
    return SubsetView(dataset, stratified_indices(targets, spec))


def save_indices(indices: Sequence[int], path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("\n".join(str(int(i)) for i in indices))
        fh.write("\n")


def load_indices(path: str | Path) -> list[int]:
    with open(path) as fh:
        return [int(line) for line in fh if line.strip()]
