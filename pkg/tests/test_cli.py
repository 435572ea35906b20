"""Command-line surface and its exit-code contract."""
import csv

import pytest
import yaml

from kdbench.cli import main
from kdbench.config_io import save_job
from tests.conftest import tiny_job


@pytest.fixture()
def tiny_config(cifar_root, tmp_path):
    spec = tiny_job(cifar_root, recipe_overrides={"epochs": 1, "warmup_epochs": 0,
                                                  "batch_size": 8})
    path = tmp_path / "tiny.yaml"
    save_job(spec, path)
    return path


def test_recipes_show_a2_prints_strategy_values(capsys):
    assert main(["recipes", "show", "A2"]) == 0
    out = capsys.readouterr().out
    assert "optimizer: lamb" in out
    assert "base_lr: 0.005" in out
    assert "batch_size: 2048" in out
    assert "warmup_epochs: 5" in out
    assert "weight_decay: 0.03" in out
    assert "rand_augment: [7, 0.5]" in out or "rand_augment: (7, 0.5)" in out
    assert "mixup_alpha: 0.1" in out
    assert "cutmix_alpha: 1.0" in out
    assert "label_loss: bce" in out


def test_recipes_list(capsys):
    assert main(["recipes", "list"]) == 0
    out = capsys.readouterr().out
    for name in ("A1", "A2", "B", "C"):
        assert name in out


def test_unknown_recipe_exits_2(capsys):
    assert main(["recipes", "show", "Q"]) == 2
    assert "valid names" in capsys.readouterr().err


def test_unknown_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_distill_and_eval_round_trip(tiny_config, tmp_path, capsys):
    runs = tmp_path / "runs"
    code = main(["distill", str(tiny_config), "--runs-root", str(runs),
                 "--max-steps", "2", "--eval-batches", "1"])
    assert code == 0
    out = capsys.readouterr().out
    assert "artifacts:" in out
    run_dir = next(runs.iterdir())
    ckpt = run_dir / "ckpt-last"
    assert ckpt.exists()

    assert main(["eval", str(ckpt), "test", "--batch-size", "16"]) == 0
    out = capsys.readouterr().out
    assert "top1=" in out and "top5=" in out


def test_distill_with_set_override(tiny_config, tmp_path, capsys):
    runs = tmp_path / "runs"
    code = main(["distill", str(tiny_config), "--runs-root", str(runs),
                 "--max-steps", "1", "--eval-batches", "0",
                 "--set", "recipe.base_lr=1e-3", "--set", "seed=9"])
    assert code == 0
    manifest = yaml.safe_load((next(runs.iterdir()) / "manifest").read_text())
    assert manifest["spec"]["recipe"]["base_lr"] == 1e-3
    assert manifest["spec"]["seed"] == 9


def test_distill_bad_override_path_exits_2(tiny_config, tmp_path, capsys):
    code = main(["distill", str(tiny_config), "--runs-root", str(tmp_path / "r"),
                 "--set", "recipe.nonexistent=1"])
    assert code == 2
    assert "nonexistent" in capsys.readouterr().err


def test_distill_missing_config_exits_2(tmp_path, capsys):
    assert main(["distill", str(tmp_path / "missing.yaml")]) == 2


def test_distill_missing_dataset_exits_3(tiny_config, tmp_path, capsys):
    code = main(["distill", str(tiny_config), "--runs-root", str(tmp_path / "r"),
                 "--set", "dataset.root=/nowhere/at/all"])
    assert code == 3


def test_cka_between_checkpoints(tiny_config, cifar_root, tmp_path, capsys):
    runs = tmp_path / "runs"
    main(["distill", str(tiny_config), "--runs-root", str(runs),
          "--max-steps", "1", "--eval-batches", "0"])
    ckpt = next(runs.iterdir()) / "ckpt-last"
    out_csv = tmp_path / "cka.csv"
    code = main(["cka", str(ckpt), str(ckpt), str(cifar_root),
                 "--layers-a", "stage1", "stage3", "--layers-b", "stage1", "stage3",
                 "--out", str(out_csv), "--probe-samples", "32",
                 "--batch-size", "16"])
    assert code == 0
    rows = list(csv.reader(out_csv.open()))
    assert rows[0] == ["row_layer", "col_layer", "value"]
    assert len(rows) == 5
    values = {(r[0], r[1]): float(r[2]) for r in rows[1:]}
    assert values[("stage1", "stage1")] == pytest.approx(1.0, abs=1e-5)
    assert values[("stage3", "stage3")] == pytest.approx(1.0, abs=1e-5)


def test_grid_cli(tiny_config, tmp_path, capsys):
    grid_path = tmp_path / "grid.yaml"
    grid_path.write_text(yaml.safe_dump({
        "base": str(tiny_config),
        "axes": [{"path": "recipe.base_lr", "values": [1e-2, 5e-2]}],
        "budget_steps": 1,
    }))
    runs = tmp_path / "runs"
    code = main(["grid", str(grid_path), "--runs-root", str(runs),
                 "--eval-batches", "0"])
    assert code == 0
    assert "2 cells" in capsys.readouterr().out
    assert list(runs.glob("*-grid.csv"))


def test_report_cli(tiny_config, tmp_path, capsys):
    runs = tmp_path / "runs"
    main(["distill", str(tiny_config), "--runs-root", str(runs),
          "--max-steps", "1", "--eval-batches", "1"])
    run_dir = next(p for p in runs.iterdir() if p.is_dir())
    code = main(["report", str(run_dir), "--out", str(tmp_path / "reports")])
    assert code == 0
    assert (tmp_path / "reports" / "runs.csv").exists()
