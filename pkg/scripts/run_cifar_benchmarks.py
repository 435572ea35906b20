#!/usr/bin/env python3
"""Run the CIFAR-100 benchmark jobs and compare against the reference numbers.

Needs the real CIFAR-100 archive under --data-root and teacher
checkpoints under --ckpt-root (see scripts/train_teacher.py). Budget on
one modern GPU: roughly 2-4 hours for the 240-epoch previous-recipe
job and about a day per 2400-epoch strategy-C job.
"""
import argparse
from pathlib import Path

from kdbench.analysis import emit_report
from kdbench.config_io import load_job
from kdbench.train import train_distill

REFERENCE = {
    "c100-res56-res20-kd-prev": 70.66,
    "c100-res56-res20-kd-c": 72.34,
    "c100-res56-res20-dkd-c": 73.10,
    "c100-res56-res20-dist-c": 74.51,
    "c100-res32x4-res8x4-kd-c": 75.90,
    "c100-res32x4-res8x4-dkd-c": 78.15,
    "c100-res32x4-res8x4-dist-c": 77.69,
}

JOBS = [
    "res56_res20_kd_previous.yaml",
    "res56_res20_kd_strong_c.yaml",
    "res56_res20_dkd_strong_c.yaml",
    "res56_res20_dist_strong_c.yaml",
    "res32x4_res8x4_kd_strong_c.yaml",
    "res32x4_res8x4_dkd_strong_c.yaml",
    "res32x4_res8x4_dist_strong_c.yaml",
]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config-dir", type=Path, default=Path("configs/cifar100"))
    parser.add_argument("--data-root", type=Path, default=Path("data/cifar100"))
    parser.add_argument("--ckpt-root", type=Path, default=Path("checkpoints"))
    parser.add_argument("--runs-root", type=Path, default=Path("runs"))
    parser.add_argument("--jobs", nargs="*", default=JOBS)
    parser.add_argument("--epochs", type=int, default=None,
                        help="override epochs for reduced runs")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    run_dirs = []
    for job in args.jobs:
        overrides = {"dataset.root": str(args.data_root)}
        if args.epochs is not None:
            overrides["recipe.epochs"] = args.epochs
        if args.seed is not None:
            overrides["seed"] = args.seed
        spec = load_job(args.config_dir / job, overrides)
        if spec.teacher_checkpoint:
            spec.teacher_checkpoint = str(args.ckpt_root / Path(spec.teacher_checkpoint).name)
        print(f"=== {spec.name}: {spec.method} {spec.teacher}->{spec.student} "
              f"({spec.recipe.epochs} epochs)")
        result = train_distill(spec, runs_root=args.runs_root)
        run_dirs.append(result.run_dir)
        top1 = result.final.top1 if result.final else float("nan")
        ref = REFERENCE.get(spec.name)
        flag = ""
        if ref is not None and args.epochs is None:
            flag = "OK" if abs(top1 - ref) <= 0.7 else "OUTSIDE +-0.7"
            flag = f" reference {ref:.2f} [{flag}]"
        print(f"    final top1 {top1:.2f}{flag}")

    outputs = emit_report(run_dirs, args.runs_root / "reports")
    for name, path in outputs.items():
        print(f"report {name}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
