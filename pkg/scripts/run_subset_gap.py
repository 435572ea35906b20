#!/usr/bin/env python3
"""Scale-ablation protocol: distill on a stratified subset and emit gap tables.

Runs the KD/DKD/DIST trio on the configured subset fraction, then the
gap-vs-scale CSV. With --data-root pointing at synthetic data and small
--epochs/--max-steps this exercises the whole pipeline at desk scale.
"""
import argparse
from pathlib import Path

from kdbench.analysis import emit_report
from kdbench.config_io import load_job
from kdbench.train import train_distill

JOBS = [
    "subset30_res56_res20_kd.yaml",
    "subset30_res56_res20_dkd.yaml",
    "subset30_res56_res20_dist.yaml",
]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config-dir", type=Path, default=Path("configs/cifar100"))
    parser.add_argument("--data-root", type=Path, default=Path("data/cifar100"))
    parser.add_argument("--runs-root", type=Path, default=Path("runs/subset30"))
    parser.add_argument("--fraction", type=float, default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--max-steps", type=int, default=None)
    parser.add_argument("--class-count", type=int, default=None,
                        help="override for reduced synthetic archives")
    parser.add_argument("--no-teacher-ckpt", action="store_true",
                        help="run with a randomly initialized teacher (pipeline checks)")
    args = parser.parse_args()

    run_dirs = []
    for job in JOBS:
        overrides = {"dataset.root": str(args.data_root)}
        if args.fraction is not None:
            overrides["subset.fraction"] = args.fraction
        if args.epochs is not None:
            overrides["recipe.epochs"] = args.epochs
        if args.batch_size is not None:
            overrides["recipe.batch_size"] = args.batch_size
        if args.class_count is not None:
            overrides["dataset.class_count"] = args.class_count
        spec = load_job(args.config_dir / job, overrides)
        if args.no_teacher_ckpt:
            spec.teacher_checkpoint = None
        print(f"=== {spec.name} ({spec.method}), fraction "
              f"{spec.subset.fraction if spec.subset else 1.0}")
        result = train_distill(spec, runs_root=args.runs_root, max_steps=args.max_steps)
        run_dirs.append(result.run_dir)
        if result.final:
            print(f"    final top1 {result.final.top1:.2f}")

    outputs = emit_report(run_dirs, args.runs_root / "reports")
    for name, path in outputs.items():
        print(f"report {name}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
