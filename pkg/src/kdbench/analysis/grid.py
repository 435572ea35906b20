"""Ablation grid runner.

A grid is a base job plus value lists along dotted field paths; cells
are the row-major cartesian product. Every cell owns its run directory
(keyed by a stable hash of its overrides) so a re-run skips finished
cells and a failed cell does not stop the sweep.
"""
from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from ..config_io import job_from_dict, load_job
from ..errors import ConfigError, KDBenchError
from ..recipes import DistillJobSpec, merge_overrides
from ..train import train_distill
from ..train.manifest import MetricsRecord, read_metrics, spec_hash

logger = logging.getLogger(__name__)


@dataclass
class GridSpec:
    base: DistillJobSpec
    axes: list[tuple[str, list[Any]]] = field(default_factory=list)
    budget_steps: Optional[int] = None  # per-cell training-step cap, None = full run

    def cells(self) -> list[dict[str, Any]]:
        """Row-major product; a mapping value sets several fields at once."""
        if not self.axes:
            return [{}]
        paths = [a[0] for a in self.axes]
        value_lists = [a[1] for a in self.axes]
        out = []
        for combo in itertools.product(*value_lists):
            cell: dict[str, Any] = {}
            for path, value in zip(paths, combo):
                if isinstance(value, dict):
                    cell.update(value)
                else:
                    cell[path] = value
            out.append(cell)
        return out


def load_grid(path: str | Path) -> GridSpec:
    path = Path(path)
    with open(path) as fh:
        tree = yaml.safe_load(fh)
    if not isinstance(tree, dict) or "base" not in tree:
        raise ConfigError(f"grid config must contain a 'base' job: {path}")
    base = tree["base"]
    if isinstance(base, str):
        spec = load_job((path.parent / base) if not Path(base).is_absolute() else base)
    else:
        spec = job_from_dict(base)
        if not spec.name:
            spec.name = path.stem
    axes = [(ax["path"], list(ax["values"])) for ax in tree.get("axes", [])]
    return GridSpec(base=spec, axes=axes, budget_steps=tree.get("budget_steps"))


def cell_run_id(base: DistillJobSpec, overrides: dict[str, Any]) -> str:
    payload = json.dumps({"base": spec_hash(base), "overrides": overrides},
                         sort_keys=True, default=str)
    return f"{base.name or 'grid'}-{hashlib.sha1(payload.encode()).hexdigest()[:10]}"


@dataclass
class CellResult:
    overrides: dict[str, Any]
    run_id: str
    record: Optional[MetricsRecord]
    error: Optional[str] = None


def grid_run(grid: GridSpec, runs_root: str | Path = "runs", device=None,
             allow_random_standin: bool = False,
             eval_batches: Optional[int] = None) -> list[CellResult]:
    """Execute every cell; finished cells resume from their metrics on disk."""
    runs_root = Path(runs_root)
    results: list[CellResult] = []
    for overrides in grid.cells():
        run_id = cell_run_id(grid.base, overrides)
        run_dir = runs_root / run_id
        done_marker = run_dir / "grid-cell-done"
        if done_marker.exists():
            records = read_metrics(run_dir)
            results.append(CellResult(overrides, run_id, records[-1] if records else None))
            logger.info("cell %s already finished; skipping", run_id)
            continue
        try:
            spec = merge_overrides(grid.base, overrides)
            result = train_distill(spec, runs_root=runs_root, run_id=run_id,
                                   device=device, max_steps=grid.budget_steps,
                                   allow_random_standin=allow_random_standin,
                                   eval_batches=eval_batches)
            done_marker.write_text("ok\n")
            results.append(CellResult(overrides, run_id, result.final))
        except KDBenchError as exc:
            logger.warning("cell %s failed: %s", run_id, exc)
            results.append(CellResult(overrides, run_id, None, error=str(exc)))
    write_grid_csv(grid, results, runs_root / f"{grid.base.name or 'grid'}-grid.csv")
    return results


def write_grid_csv(grid: GridSpec, results: list[CellResult], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = sorted({key for cell in results for key in cell.overrides})
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run_id", *columns, "top1", "top5", "loss_total", "error"])
        for cell in results:
            rec = cell.record
            writer.writerow([
                cell.run_id,
                *[cell.overrides.get(c, "") for c in columns],
                f"{rec.top1:.4f}" if rec else "",
                f"{rec.top5:.4f}" if rec else "",
                f"{rec.loss_total:.6f}" if rec else "",
                cell.error or "",
            ])
    return path
