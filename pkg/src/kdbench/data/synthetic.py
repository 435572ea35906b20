"""Synthetic dataset fixtures in the real on-disk layouts.

Used by tests and smoke runs: archives are byte-compatible with the
CIFAR-100 pickle layout, folder trees follow the folder-per-class
convention. Images carry a weak class-dependent color signal so short
training runs have something learnable.
"""
from __future__ import annotations

import pickle
from pathlib import Path

import numpy as np
from PIL import Image


def _class_image(rng: np.random.Generator, cls: int, classes: int, size: int) -> np.ndarray:
    base = np.full((size, size, 3), 32 + (191 * cls) // max(classes - 1, 1), dtype=np.float64)
    base[:, :, cls % 3] += 48.0
    noise = rng.normal(0.0, 24.0, size=(size, size, 3))
    return np.clip(base + noise, 0, 255).astype(np.uint8)


def make_cifar100_archive(root: str | Path, per_class_train: int = 8,
                          per_class_test: int = 4, classes: int = 100,
                          seed: int = 0) -> Path:
    """Write a cifar-100-python archive with synthetic images; returns its dir."""
    rng = np.random.default_rng(seed)
    out = Path(root) / "cifar-100-python"
    out.mkdir(parents=True, exist_ok=True)
    for fname, per_class in (("train", per_class_train), ("test", per_class_test)):
        images, labels = [], []
        for cls in range(classes):
            for _ in range(per_class):
                img = _class_image(rng, cls, classes, 32)
                images.append(img.transpose(2, 0, 1).reshape(-1))
                labels.append(cls)
        order = rng.permutation(len(labels))
        data = np.stack(images)[order].astype(np.uint8)
        batch = {
            b"data": data,
            b"fine_labels": [labels[i] for i in order],
            b"coarse_labels": [labels[i] % 20 for i in order],
        }
        with open(out / fname, "wb") as fh:
            pickle.dump(batch, fh)
    meta = {b"fine_label_names": [f"class_{i:03d}".encode() for i in range(classes)]}
    with open(out / "meta", "wb") as fh:
        pickle.dump(meta, fh)
    return out


def make_folder_tree(root: str | Path, classes: int = 4, per_class: int = 6,
                     size: int = 64, splits: tuple[str, ...] = ("train", "val"),
                     seed: int = 0) -> Path:
    """Write a folder-per-class image tree (optionally with split subdirs)."""
    rng = np.random.default_rng(seed)
    root = Path(root)
    for split in splits or ("",):
        base = root / split if split else root
        for cls in range(classes):
            cls_dir = base / f"class_{cls:03d}"
            cls_dir.mkdir(parents=True, exist_ok=True)
            count = per_class if split != "val" else max(per_class // 2, 1)
            for i in range(count):
                img = Image.fromarray(_class_image(rng, cls, classes, size))
                img.save(cls_dir / f"img_{i:04d}.png")
    return root
