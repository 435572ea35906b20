"""Gap tables and CSV report emission.

The gap of a teacher-student pair is the vanilla-KD accuracy minus the
best accuracy among the other methods; negative means vanilla KD
trails. All file outputs are UTF-8 columnar CSV with LF endings, no
plotting dependencies.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from ..errors import ReportError
from ..train.manifest import read_manifest, read_metrics

VANILLA = "kd"


@dataclass
class RunSummary:
    run_id: str
    pair: str  # "teacher->student"
    method: str
    dataset: str
    top1: float
    scale: float = 1.0  # subset fraction, 1.0 for the full set
    epochs: int = 0

    @property
    def group(self) -> tuple[str, str, float]:
        return (self.dataset, self.pair, self.scale)


@dataclass
class GapEntry:
    dataset: str
    pair: str
    scale: float
    methods: dict[str, float]
    kd_top1: float
    best_other_method: str
    best_other_top1: float

    @property
    def delta(self) -> float:
        return self.kd_top1 - self.best_other_top1


@dataclass
class GapReport:
    entries: list[GapEntry] = field(default_factory=list)


def summarize_run(run_dir: str | Path) -> RunSummary:
    run_dir = Path(run_dir)
    manifest = read_manifest(run_dir)
    spec = manifest["spec"]
    records = read_metrics(run_dir)
    eval_records = [r for r in records if r.split not in ("train", "train-stage1")]
    source = eval_records or records
    if not source:
        raise ReportError(f"no metrics records in {run_dir}")
    best = max(source, key=lambda r: r.top1)
    subset = spec.get("subset") or {}
    return RunSummary(
        run_id=manifest["run_id"],
        pair=f"{spec['teacher']}->{spec['student']}",
        method=spec["method"],
        dataset=spec["dataset"]["name"],
        top1=best.top1,
        scale=float(subset.get("fraction", 1.0)),
        epochs=int(spec["recipe"]["epochs"]),
    )


def gap_table(rows: Iterable[RunSummary]) -> GapReport:
    """Per teacher-student pair: method accuracies and the vanilla-KD gap."""
    groups: dict[tuple, dict[str, float]] = {}
    for row in rows:
        methods = groups.setdefault(row.group, {})
        # best accuracy wins if a method appears twice in a group
        if row.method not in methods or row.top1 > methods[row.method]:
            methods[row.method] = row.top1
    report = GapReport()
    for (dataset, pair, scale), methods in sorted(groups.items()):
        if VANILLA not in methods:
            raise ReportError(f"pair {pair} ({dataset}, scale {scale}) has no vanilla-KD run")
        others = {m: a for m, a in methods.items() if m != VANILLA}
        if not others:
            raise ReportError(f"pair {pair} ({dataset}, scale {scale}) has only vanilla KD")
        best_method = max(others, key=others.get)
        report.entries.append(GapEntry(
            dataset=dataset, pair=pair, scale=scale, methods=dict(methods),
            kd_top1=methods[VANILLA],
            best_other_method=best_method,
            best_other_top1=others[best_method],
        ))
    return report


def _write_csv(path: Path, header: list[str], rows: Iterable[list]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    return path


def write_runs_csv(summaries: list[RunSummary], path: str | Path) -> Path:
    return _write_csv(
        Path(path),
        ["run_id", "dataset", "pair", "method", "scale", "epochs", "top1"],
        ([s.run_id, s.dataset, s.pair, s.method, s.scale, s.epochs, f"{s.top1:.4f}"]
         for s in summaries),
    )


def write_gap_csv(report: GapReport, path: str | Path) -> Path:
    return _write_csv(
        Path(path),
        ["dataset", "pair", "scale", "kd_top1", "best_other_method",
         "best_other_top1", "delta"],
        ([e.dataset, e.pair, e.scale, f"{e.kd_top1:.4f}", e.best_other_method,
          f"{e.best_other_top1:.4f}", f"{e.delta:.4f}"] for e in report.entries),
    )


def write_gap_vs_scale_csv(report: GapReport, path: str | Path) -> Path:
    """Long-form method-accuracy-by-scale table (one row per scale x method)."""
    rows = []
    for e in sorted(report.entries, key=lambda e: (e.dataset, e.pair, e.scale)):
        for method, top1 in sorted(e.methods.items()):
            rows.append([e.dataset, e.pair, e.scale, method, f"{top1:.4f}",
                         f"{top1 - e.kd_top1:.4f}"])
    return _write_csv(
        Path(path),
        ["dataset", "pair", "scale", "method", "top1", "gap_to_kd"],
        rows,
    )


def write_cka_csv(matrix, path: str | Path) -> Path:
    return _write_csv(
        Path(path),
        ["row_layer", "col_layer", "value"],
        ([rl, cl, f"{v:.6f}"] for rl, cl, v in matrix.rows()),
    )


def emit_report(run_dirs: Iterable[str | Path], out_dir: str | Path) -> dict[str, Path]:
    """Summarize runs into CSV tables; gap tables appear when computable."""
    out_dir = Path(out_dir)
    summaries = [summarize_run(d) for d in run_dirs]
    outputs = {"runs": write_runs_csv(summaries, out_dir / "runs.csv")}
    try:
        report = gap_table(summaries)
    except ReportError:
        report = None
    if report is not None:
        outputs["gap"] = write_gap_csv(report, out_dir / "gap.csv")
        outputs["gap_vs_scale"] = write_gap_vs_scale_csv(report, out_dir / "gap_vs_scale.csv")
    elif not summaries:
        outputs["gap"] = write_gap_csv(GapReport(), out_dir / "gap.csv")
    return outputs
