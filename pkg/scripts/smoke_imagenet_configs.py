#!/usr/bin/env python3
"""Validate every ImageNet config and run a short smoke pass of one job.

The smoke pass keeps the full strategy (optimizer, schedule,
augmentation stack, loss) and only overrides batch size and step count
so it fits on small hardware; synthetic folder data stands in for the
real dataset. Checks for numeric aborts, nothing more.
"""
import argparse
import tempfile
from pathlib import Path

from kdbench.analysis import load_grid
from kdbench.config_io import load_job
from kdbench.data.synthetic import make_folder_tree
from kdbench.train import train_distill

DEFAULT_JOB = "a2_res34_res18_kd.yaml"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config-dir", type=Path, default=Path("configs/imagenet"))
    parser.add_argument("--job", default=DEFAULT_JOB)
    parser.add_argument("--steps", type=int, default=50)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--classes", type=int, default=8)
    parser.add_argument("--data-root", type=Path, default=None,
                        help="folder tree to smoke against; synthetic when omitted")
    args = parser.parse_args()

    for path in sorted(args.config_dir.glob("*.yaml")):
        if path.name.startswith("grid_"):
            grid = load_grid(path)
            print(f"validated grid {path.name}: {len(grid.cells())} cells")
        else:
            spec = load_job(path)
            print(f"validated job {path.name}: {spec.method} "
                  f"{spec.teacher}->{spec.student} recipe {spec.recipe.name}")

    data_root = args.data_root
    if data_root is None:
        data_root = Path(tempfile.mkdtemp(prefix="kdbench-smoke-")) / "imagenet-like"
        make_folder_tree(data_root, classes=args.classes,
                         per_class=max(args.batch_size, 4), size=256)
        print(f"synthetic smoke data at {data_root}")

    overrides = {
        "dataset.root": str(data_root),
        "dataset.class_count": args.classes,
        "recipe.batch_size": args.batch_size,
    }
    spec = load_job(args.config_dir / args.job, overrides)
    spec.teacher_checkpoint = None  # random-weight smoke; numeric checks only
    print(f"smoke: {spec.name}, {args.steps} steps at batch {args.batch_size}")
    result = train_distill(spec, runs_root=Path(tempfile.mkdtemp(prefix="kdbench-runs-")),
                           max_steps=args.steps, eval_batches=0,
                           allow_random_standin=True)
    finite = all(x == x and abs(x) != float("inf") for x in result.step_losses)
    print(f"steps run: {len(result.step_losses)}, all losses finite: {finite}")
    return 0 if finite else 4


if __name__ == "__main__":
    raise SystemExit(main())
