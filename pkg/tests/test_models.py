"""Model registry, CIFAR resnets, taps, stand-in policy."""
import pytest
import torch

from kdbench.errors import NotFoundError, TapError
from kdbench.models import FeatureTaps, build_model, model_entry, model_names, resolve_tap


def test_cifar_family_shapes_and_sizes():
    x = torch.randn(2, 3, 32, 32)
    expected_params = {
        "resnet20_cifar": (260_000, 300_000),
        "resnet56_cifar": (840_000, 890_000),
        "resnet8x4_cifar": (1_200_000, 1_300_000),
        "resnet32x4_cifar": (7_000_000, 7_600_000),
    }
    for name, (lo, hi) in expected_params.items():
        model = build_model(name, num_classes=100)
        assert model(x).shape == (2, 100)
        n = sum(p.numel() for p in model.parameters())
        assert lo <= n <= hi, f"{name}: {n} params"


def test_teacher_is_wider_or_deeper_than_student():
    t = sum(p.numel() for p in build_model("resnet56_cifar", 100).parameters())
    s = sum(p.numel() for p in build_model("resnet20_cifar", 100).parameters())
    assert t > 2 * s


def test_unknown_model():
    with pytest.raises(NotFoundError, match="unknown model"):
        build_model("resnet999", 10)


def test_registry_lists_external_standins():
    names = model_names()
    assert "beitv2_l" in names and "convnext_xl" in names
    assert model_entry("beitv2_l").standin_for == "vit_l_16"


def test_standin_requires_checkpoint_or_flag():
    with pytest.raises(NotFoundError, match="external frozen teacher"):
        build_model("beitv2_b", 10)


def test_feature_taps_capture_stage_outputs():
    model = build_model("resnet20_cifar", 10)
    with FeatureTaps(model, ["stage1", "stage2", "stage3", "avgpool"]) as taps:
        model(torch.randn(2, 3, 32, 32))
    assert taps.outputs["stage1"].shape == (2, 16, 32, 32)
    assert taps.outputs["stage2"].shape == (2, 32, 16, 16)
    assert taps.outputs["stage3"].shape == (2, 64, 8, 8)
    assert taps.outputs["avgpool"].shape == (2, 64, 1, 1)


def test_taps_removed_after_close():
    model = build_model("resnet20_cifar", 10)
    taps = FeatureTaps(model, ["stage1"])
    taps.close()
    taps.outputs.clear()
    model(torch.randn(1, 3, 32, 32))
    assert taps.outputs == {}


def test_resolve_tap_error_names_candidates():
    model = build_model("resnet20_cifar", 10)
    with pytest.raises(TapError, match="stage"):
        resolve_tap(model, "stage7")


def test_checkpoint_round_trip(tmp_path):
    model = build_model("resnet20_cifar", 10)
    path = tmp_path / "m.pt"
    torch.save(model.state_dict(), path)
    again = build_model("resnet20_cifar", 10, checkpoint=str(path))
    for a, b in zip(model.state_dict().values(), again.state_dict().values()):
        assert torch.equal(a, b)


def test_tap_channels_match_reality():
    for name in ("resnet20_cifar", "resnet8x4_cifar"):
        entry = model_entry(name)
        model = build_model(name, 10)
        with FeatureTaps(model, list(entry.tap_channels)) as taps:
            model(torch.randn(1, 3, 32, 32))
        for tap, channels in entry.tap_channels.items():
            assert taps.outputs[tap].shape[1] == channels, (name, tap)
