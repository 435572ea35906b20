#!/usr/bin/env python3
"""Generate synthetic datasets in the real on-disk layouts.

Produces a CIFAR-100-format archive and folder-per-class trees sized
for smoke runs. Synthetic data exercises the pipelines; it says nothing
about accuracy.
"""
import argparse
from pathlib import Path

from kdbench.data.synthetic import make_cifar100_archive, make_folder_tree


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("data/synthetic"))
    parser.add_argument("--classes", type=int, default=20)
    parser.add_argument("--per-class", type=int, default=16)
    parser.add_argument("--folder-classes", type=int, default=8)
    parser.add_argument("--folder-size", type=int, default=256,
                        help="pixel size of folder-tree images")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    archive = make_cifar100_archive(args.out / "cifar100", per_class_train=args.per_class,
                                    per_class_test=max(args.per_class // 4, 2),
                                    classes=args.classes, seed=args.seed)
    print(f"cifar100 archive: {archive}")
    tree = make_folder_tree(args.out / "imagenet-like", classes=args.folder_classes,
                            per_class=args.per_class, size=args.folder_size,
                            splits=("train", "val"), seed=args.seed)
    print(f"folder tree: {tree}")
    pool = make_folder_tree(args.out / "unlabeled-pool", classes=args.folder_classes,
                            per_class=args.per_class, size=args.folder_size,
                            splits=(), seed=args.seed + 1)
    print(f"unlabeled pool: {pool}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
