"""Command-line surface.

Subcommands: ``distill``, ``eval``, ``cka``, ``grid``, ``report``,
``recipes``. Exit codes: 0 success, 2 config error, 3 data error,
4 numeric abort.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import torch

from .config_io import load_job, parse_set_args
from .errors import ConfigError, DataError, KDBenchError, NumericError
from .recipes import BUILTIN_RECIPE_NAMES, builtin_recipe
from . import __version__

logger = logging.getLogger("kdbench")


def _device(arg: str | None) -> torch.device:
    if arg:
        return torch.device(arg)
    return torch.device("cuda" if torch.cuda.is_available() else "cpu")


def _add_set(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="PATH=VALUE", help="override a config field by dotted path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kdbench",
                                     description="knowledge-distillation training and analysis")
    parser.add_argument("--version", action="version", version=f"kdbench {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distill", help="run one distillation job from a config file")
    p.add_argument("config", type=Path)
    _add_set(p)
    p.add_argument("--runs-root", type=Path, default=Path("runs"))
    p.add_argument("--device", default=None)
    p.add_argument("--max-steps", type=int, default=None,
                   help="stop after N optimizer steps (smoke runs)")
    p.add_argument("--eval-batches", type=int, default=None,
                   help="cap evaluation batches; 0 disables eval")
    p.add_argument("--resume", type=Path, default=None, help="checkpoint to resume from")
    p.add_argument("--allow-random-standin", action="store_true",
                   help="let external teachers build with random weights (smoke only)")

    p = sub.add_parser("eval", help="evaluate a checkpointed student on a split")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("split")
    p.add_argument("--device", default=None)
    p.add_argument("--batch-size", type=int, default=128)

    p = sub.add_parser("cka", help="layer-similarity heatmap between two checkpoints")
    p.add_argument("ckpt_a", type=Path)
    p.add_argument("ckpt_b", type=Path)
    p.add_argument("probe", type=Path, help="probe dataset root (archive or folder tree)")
    p.add_argument("--layers-a", nargs="*", default=None)
    p.add_argument("--layers-b", nargs="*", default=None)
    p.add_argument("--out", type=Path, default=Path("cka.csv"))
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--probe-samples", type=int, default=2048)
    p.add_argument("--device", default=None)

    p = sub.add_parser("grid", help="run an ablation grid")
    p.add_argument("gridconfig", type=Path)
    _add_set(p)
    p.add_argument("--runs-root", type=Path, default=Path("runs"))
    p.add_argument("--device", default=None)
    p.add_argument("--eval-batches", type=int, default=None)
    p.add_argument("--allow-random-standin", action="store_true")

    p = sub.add_parser("report", help="emit CSV tables from finished runs")
    p.add_argument("runs", nargs="+", type=Path)
    p.add_argument("--out", type=Path, default=Path("reports"))

    p = sub.add_parser("recipes", help="list or show builtin training strategies")
    p.add_argument("action", choices=["list", "show"])
    p.add_argument("name", nargs="?", default=None)

    return parser


def _cmd_distill(args) -> int:
    from .train import train_distill

    overrides = parse_set_args(args.overrides)
    spec = load_job(args.config, overrides)
    result = train_distill(
        spec, runs_root=args.runs_root, device=_device(args.device),
        max_steps=args.max_steps, resume_from=args.resume,
        allow_random_standin=args.allow_random_standin,
        eval_batches=args.eval_batches,
    )
    if result.final is not None:
        print(f"run {result.run_id}: split={result.final.split} "
              f"top1={result.final.top1:.2f} loss={result.final.loss_total:.4f}")
    print(f"artifacts: {result.run_dir}")
    return 0


def _load_ckpt_model(path: Path, device: torch.device):
    from .config_io import job_from_dict
    from .models import build_model

    payload = torch.load(path, map_location="cpu", weights_only=False)
    spec = job_from_dict(payload["spec"])
    model = build_model(payload["arch"], payload["class_count"])
    model.load_state_dict(payload["student"])
    return model.to(device), spec, payload


def _cmd_eval(args) -> int:
    from .train import evaluate

    device = _device(args.device)
    model, spec, _ = _load_ckpt_model(args.checkpoint, device)
    res = evaluate(model, spec.dataset, args.split, spec.recipe, device,
                   batch_size=args.batch_size)
    print(f"split={args.split} top1={res.top1:.2f} top5={res.top5:.2f} "
          f"loss={res.loss:.4f} n={res.samples}")
    return 0


def _cmd_cka(args) -> int:
    from .analysis import cka_heatmap, write_cka_csv
    from .data import build_dataset, build_augmentation
    from .models import model_entry
    from .recipes import DatasetRef

    device = _device(args.device)
    model_a, spec_a, _ = _load_ckpt_model(args.ckpt_a, device)
    model_b, spec_b, payload_b = _load_ckpt_model(args.ckpt_b, device)
    layers_a = args.layers_a or list(model_entry(spec_a.student).tap_channels)
    layers_b = args.layers_b or list(model_entry(payload_b["arch"]).tap_channels)

    probe_root = args.probe
    kind = "cifar100" if (probe_root / "cifar-100-python").exists() or (
        probe_root.name == "cifar-100-python") else "folder"
    ref = DatasetRef(name=probe_root.name, root=str(probe_root), kind=kind,
                     class_count=spec_a.dataset.class_count,
                     resolution=spec_a.recipe.student_resolution)
    transform = build_augmentation(spec_a.recipe, train=False, ref=ref)
    dataset = build_dataset(ref, split="train", transform=transform)

    def batches():
        limit = min(args.probe_samples, len(dataset))
        for start in range(0, limit, args.batch_size):
            idx = range(start, min(start + args.batch_size, limit))
            images = torch.stack([dataset[i][0] for i in idx])
            yield images

    matrix = cka_heatmap(model_a, model_b, batches(), layers_a, layers_b, device=device)
    write_cka_csv(matrix, args.out)
    print(f"wrote {len(layers_a)}x{len(layers_b)} CKA table to {args.out}")
    return 0


def _cmd_grid(args) -> int:
    from .analysis import grid_run, load_grid
    from .recipes import merge_overrides

    grid = load_grid(args.gridconfig)
    overrides = parse_set_args(args.overrides)
    if overrides:
        grid.base = merge_overrides(grid.base, overrides)
    results = grid_run(grid, runs_root=args.runs_root, device=_device(args.device),
                       allow_random_standin=args.allow_random_standin,
                       eval_batches=args.eval_batches)
    failed = sum(1 for r in results if r.error)
    print(f"grid finished: {len(results)} cells, {failed} failed")
    return 0


def _cmd_report(args) -> int:
    from .analysis import emit_report

    outputs = emit_report(args.runs, args.out)
    for name, path in outputs.items():
        print(f"{name}: {path}")
    return 0


def _cmd_recipes(args) -> int:
    if args.action == "list":
        for name in BUILTIN_RECIPE_NAMES:
            r = builtin_recipe(name)
            print(f"{name}: {r.optimizer} lr={r.base_lr} bs={r.batch_size} "
                  f"epochs={r.epochs} label={r.label_loss}")
        return 0
    if not args.name:
        raise ConfigError("recipes show requires a name")
    recipe = builtin_recipe(args.name)
    for key, value in dataclasses.asdict(recipe).items():
        print(f"{key}: {value}")
    return 0


_COMMANDS = {
    "distill": _cmd_distill,
    "eval": _cmd_eval,
    "cka": _cmd_cka,
    "grid": _cmd_grid,
    "report": _cmd_report,
    "recipes": _cmd_recipes,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 4
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except KDBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
