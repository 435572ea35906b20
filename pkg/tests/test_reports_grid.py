"""Gap tables, CSV emission, and the grid runner."""
import csv

import pytest

from kdbench.analysis import (
    GridSpec,
    RunSummary,
    cell_run_id,
    emit_report,
    gap_table,
    grid_run,
    load_grid,
    write_cka_csv,
    write_gap_csv,
    write_gap_vs_scale_csv,
)
from kdbench.errors import ParseError, ReportError
from kdbench.train import read_metrics, train_distill
from tests.conftest import tiny_job


def rows_published():
    return [
        RunSummary("r1", "res34->res18", "kd", "imagenet", 73.46),
        RunSummary("r2", "res34->res18", "dkd", "imagenet", 73.07),
        RunSummary("r3", "res34->res18", "dist", "imagenet", 73.52),
        RunSummary("r4", "res56->res20", "kd", "cifar100", 72.34),
        RunSummary("r5", "res56->res20", "dkd", "cifar100", 73.10),
        RunSummary("r6", "res56->res20", "dist", "cifar100", 74.51),
    ]


class TestGapTable:
    def test_published_deltas(self):
        report = gap_table(rows_published())
        deltas = {e.pair: round(e.delta, 2) for e in report.entries}
        assert deltas["res34->res18"] == -0.06
        assert deltas["res56->res20"] == -2.17
        best = {e.pair: e.best_other_method for e in report.entries}
        assert best["res34->res18"] == "dist"
        assert best["res56->res20"] == "dist"

    def test_delta_recomputable_from_methods(self):
        report = gap_table(rows_published())
        for e in report.entries:
            others = {m: a for m, a in e.methods.items() if m != "kd"}
            assert e.delta == pytest.approx(e.methods["kd"] - max(others.values()))

    def test_missing_vanilla_raises(self):
        rows = [RunSummary("r", "a->b", "dkd", "d", 70.0),
                RunSummary("r2", "a->b", "dist", "d", 71.0)]
        with pytest.raises(ReportError, match="vanilla"):
            gap_table(rows)

    def test_only_vanilla_raises(self):
        rows = [RunSummary("r", "a->b", "kd", "d", 70.0)]
        with pytest.raises(ReportError):
            gap_table(rows)

    def test_scales_grouped_separately(self):
        rows = [
            RunSummary("r1", "a->b", "kd", "d", 60.0, scale=0.3),
            RunSummary("r2", "a->b", "dist", "d", 62.0, scale=0.3),
            RunSummary("r3", "a->b", "kd", "d", 70.0, scale=1.0),
            RunSummary("r4", "a->b", "dist", "d", 70.5, scale=1.0),
        ]
        report = gap_table(rows)
        assert len(report.entries) == 2
        by_scale = {e.scale: e.delta for e in report.entries}
        assert by_scale[0.3] == pytest.approx(-2.0)
        assert by_scale[1.0] == pytest.approx(-0.5)


class TestCsvEmission:
    def test_gap_csv_shape(self, tmp_path):
        report = gap_table(rows_published())
        path = write_gap_csv(report, tmp_path / "gap.csv")
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["dataset", "pair", "scale", "kd_top1",
                           "best_other_method", "best_other_top1", "delta"]
        assert len(rows) == 3

    def test_gap_vs_scale_long_form(self, tmp_path):
        rows_in = []
        for scale in (0.3, 0.6, 1.0, 0.1):
            for method in ("kd", "dkd", "dist"):
                rows_in.append(RunSummary(f"r{scale}{method}", "a->b", method, "d",
                                          70.0 + scale, scale=scale))
        path = write_gap_vs_scale_csv(gap_table(rows_in), tmp_path / "gvs.csv")
        rows = list(csv.reader(path.open()))
        assert len(rows) == 1 + 4 * 3  # header + scales x methods

    def test_cka_long_form(self, tmp_path):
        import numpy as np

        from kdbench.analysis import CKAMatrix

        matrix = CKAMatrix(["l1", "l2"], ["m1"], np.array([[0.5], [0.25]]))
        path = write_cka_csv(matrix, tmp_path / "cka.csv")
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["row_layer", "col_layer", "value"]
        assert rows[1] == ["l1", "m1", "0.500000"]

    def test_empty_run_set_emits_headers(self, tmp_path):
        outputs = emit_report([], tmp_path)
        rows = list(csv.reader(outputs["runs"].open()))
        assert rows == [["run_id", "dataset", "pair", "method", "scale", "epochs", "top1"]]

    def test_malformed_metrics_line_parse_error(self, tmp_path):
        bad = tmp_path / "metrics.jsonl"
        bad.write_text('{"run_id": "x"}\nnot json\n')
        with pytest.raises(ParseError) as err:
            read_metrics(bad)
        assert err.value.line == 1  # first line already lacks fields


class TestGridRunner:
    def test_cell_product(self, cifar_root):
        grid = GridSpec(base=tiny_job(cifar_root), axes=[
            ("recipe.base_lr", [2e-3, 5e-3]),
            ("recipe.weight_decay", [0.02, 0.03]),
        ])
        cells = grid.cells()
        assert len(cells) == 4
        assert cells[0] == {"recipe.base_lr": 2e-3, "recipe.weight_decay": 0.02}

    def test_empty_axes_single_cell(self, cifar_root):
        assert GridSpec(base=tiny_job(cifar_root)).cells() == [{}]

    def test_mapping_values_expand(self, cifar_root):
        grid = GridSpec(base=tiny_job(cifar_root), axes=[
            ("hard_label", [{"recipe.label_loss": "ce"},
                            {"recipe.label_loss": "bce"},
                            {"recipe.label_loss": "none", "alpha": 0.0}]),
            ("soft_loss", ["kl", "bkl"]),
        ])
        cells = grid.cells()
        assert len(cells) == 6
        assert {"recipe.label_loss": "none", "alpha": 0.0, "soft_loss": "bkl"} in cells

    def test_cell_ids_stable(self, cifar_root):
        base = tiny_job(cifar_root)
        a = cell_run_id(base, {"recipe.base_lr": 1e-3})
        b = cell_run_id(base, {"recipe.base_lr": 1e-3})
        c = cell_run_id(base, {"recipe.base_lr": 2e-3})
        assert a == b != c

    def test_run_executes_resumes_and_continues_on_failure(self, cifar_root, tmp_path):
        base = tiny_job(cifar_root, recipe_overrides={"epochs": 1, "warmup_epochs": 0,
                                                      "batch_size": 8})
        grid = GridSpec(base=base, axes=[
            ("recipe.base_lr", [5e-2, -1.0]),  # second cell fails validation
        ], budget_steps=2)
        results = grid_run(grid, runs_root=tmp_path, eval_batches=0)
        assert len(results) == 2
        assert results[0].error is None
        assert results[1].error is not None and "base_lr" in results[1].error
        csv_path = tmp_path / f"{base.name}-grid.csv"
        assert csv_path.exists()

        # second invocation skips the finished cell (same records, no retrain)
        again = grid_run(grid, runs_root=tmp_path, eval_batches=0)
        assert again[0].run_id == results[0].run_id

    def test_cell_order_independent_metrics(self, cifar_root, tmp_path):
        base = tiny_job(cifar_root, recipe_overrides={"epochs": 1, "warmup_epochs": 0,
                                                      "batch_size": 8})
        forward = GridSpec(base=base, axes=[("recipe.base_lr", [1e-2, 5e-2])],
                           budget_steps=2)
        backward = GridSpec(base=base, axes=[("recipe.base_lr", [5e-2, 1e-2])],
                            budget_steps=2)
        res_f = {tuple(r.overrides.items()): r.record.loss_total
                 for r in grid_run(forward, runs_root=tmp_path / "f", eval_batches=0)}
        res_b = {tuple(r.overrides.items()): r.record.loss_total
                 for r in grid_run(backward, runs_root=tmp_path / "b", eval_batches=0)}
        assert res_f == res_b

    def test_load_grid_from_yaml(self, cifar_root, tmp_path):
        from kdbench.config_io import save_job
        import yaml

        job_path = tmp_path / "base.yaml"
        save_job(tiny_job(cifar_root), job_path)
        grid_path = tmp_path / "grid.yaml"
        grid_path.write_text(yaml.safe_dump({
            "base": "base.yaml",
            "axes": [{"path": "recipe.base_lr", "values": [1e-3, 2e-3]}],
            "budget_steps": 3,
        }))
        grid = load_grid(grid_path)
        assert len(grid.cells()) == 2
        assert grid.budget_steps == 3


class TestEndToEndReport:
    def test_runs_to_gap_table(self, cifar_root, tmp_path):
        run_dirs = []
        for method in ("kd", "dist"):
            spec = tiny_job(cifar_root, method=method, name=f"tiny-{method}",
                            recipe_overrides={"epochs": 1, "warmup_epochs": 0,
                                              "batch_size": 8})
            result = train_distill(spec, runs_root=tmp_path / "runs", eval_batches=1)
            run_dirs.append(result.run_dir)
        outputs = emit_report(run_dirs, tmp_path / "reports")
        assert outputs["runs"].exists()
        assert "gap" in outputs
        rows = list(csv.reader(outputs["gap"].open()))
        assert len(rows) == 2  # header + one pair
        delta = float(rows[1][-1])
        methods_row = list(csv.reader(outputs["runs"].open()))
        assert len(methods_row) == 3
        assert isinstance(delta, float)
