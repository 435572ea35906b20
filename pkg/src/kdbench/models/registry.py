"""Architecture registry and activation taps.

Internal architectures build from scratch; the large published teachers
are external frozen inputs, so their names resolve to shape-compatible
stand-ins that demand a checkpoint (or an explicit opt-in to random
weights for smoke runs).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import torch
from torch import nn

from ..errors import NotFoundError, TapError
from . import cifar_resnet

logger = logging.getLogger(__name__)


@dataclass
class ModelEntry:
    builder: Callable[..., nn.Module]
    input_size: int
    supports_drop_path: bool = False
    standin_for: Optional[str] = None
    default_tap: str = ""
    tap_channels: dict[str, int] = field(default_factory=dict)


def _tv(name: str):
    import torchvision.models as tvm

    return getattr(tvm, name)


def _tv_builder(name: str, drop_path_kwarg: str | None = None, **fixed):
    def build(num_classes: int, drop_path_rate: float = 0.0) -> nn.Module:
        kwargs = dict(fixed)
        if drop_path_rate > 0 and drop_path_kwarg:
            kwargs[drop_path_kwarg] = drop_path_rate
        return _tv(name)(weights=None, num_classes=num_classes, **kwargs)

    return build


def _cifar_builder(fn):
    def build(num_classes: int, drop_path_rate: float = 0.0) -> nn.Module:
        # stochastic depth is not part of this family; the rate is ignored
        return fn(num_classes=num_classes)

    return build


_CIFAR_TAPS = {"stage1": 0, "stage2": 0, "stage3": 0, "avgpool": 0}
_TV_RESNET_TAPS = ("layer1", "layer2", "layer3", "layer4", "avgpool")

REGISTRY: dict[str, ModelEntry] = {
    "resnet20_cifar": ModelEntry(_cifar_builder(cifar_resnet.resnet20), 32, default_tap="stage3",
                                 tap_channels={"stage1": 16, "stage2": 32, "stage3": 64, "avgpool": 64}),
    "resnet56_cifar": ModelEntry(_cifar_builder(cifar_resnet.resnet56), 32, default_tap="stage3",
                                 tap_channels={"stage1": 16, "stage2": 32, "stage3": 64, "avgpool": 64}),
    "resnet110_cifar": ModelEntry(_cifar_builder(cifar_resnet.resnet110), 32, default_tap="stage3",
                                  tap_channels={"stage1": 16, "stage2": 32, "stage3": 64, "avgpool": 64}),
    "resnet8x4_cifar": ModelEntry(_cifar_builder(cifar_resnet.resnet8x4), 32, default_tap="stage3",
                                  tap_channels={"stage1": 64, "stage2": 128, "stage3": 256, "avgpool": 256}),
    "resnet32x4_cifar": ModelEntry(_cifar_builder(cifar_resnet.resnet32x4), 32, default_tap="stage3",
                                   tap_channels={"stage1": 64, "stage2": 128, "stage3": 256, "avgpool": 256}),
    "resnet18": ModelEntry(_tv_builder("resnet18"), 224, default_tap="layer4",
                           tap_channels={"layer1": 64, "layer2": 128, "layer3": 256, "layer4": 512, "avgpool": 512}),
    "resnet34": ModelEntry(_tv_builder("resnet34"), 224, default_tap="layer4",
                           tap_channels={"layer1": 64, "layer2": 128, "layer3": 256, "layer4": 512, "avgpool": 512}),
    "resnet50": ModelEntry(_tv_builder("resnet50"), 224, default_tap="layer4",
                           tap_channels={"layer1": 256, "layer2": 512, "layer3": 1024, "layer4": 2048, "avgpool": 2048}),
    "resnet152": ModelEntry(_tv_builder("resnet152"), 224, default_tap="layer4",
                            tap_channels={"layer1": 256, "layer2": 512, "layer3": 1024, "layer4": 2048, "avgpool": 2048}),
    "mobilenet_v2": ModelEntry(_tv_builder("mobilenet_v2"), 224, default_tap="features",
                               tap_channels={"features": 1280}),
    "convnext_tiny": ModelEntry(_tv_builder("convnext_tiny", drop_path_kwarg="stochastic_depth_prob"), 224, supports_drop_path=True,
                                default_tap="features", tap_channels={"features": 768}),
    "vit_b_16": ModelEntry(_tv_builder("vit_b_16"), 224, default_tap="encoder.ln",
                           tap_channels={"encoder.ln": 768}),
    "vit_l_16": ModelEntry(_tv_builder("vit_l_16"), 224, default_tap="encoder.ln",
                           tap_channels={"encoder.ln": 1024}),
    # External frozen teachers; weights are not shipped with this toolkit.
    "beitv2_b": ModelEntry(_tv_builder("vit_b_16"), 224, standin_for="vit_b_16",
                           default_tap="encoder.ln", tap_channels={"encoder.ln": 768}),
    "beitv2_l": ModelEntry(_tv_builder("vit_l_16"), 224, standin_for="vit_l_16",
                           default_tap="encoder.ln", tap_channels={"encoder.ln": 1024}),
    "convnext_xl": ModelEntry(_tv_builder("convnext_large", drop_path_kwarg="stochastic_depth_prob"), 224, standin_for="convnext_large",
                              supports_drop_path=True, default_tap="features",
                              tap_channels={"features": 1536}),
}


def model_names() -> list[str]:
    return sorted(REGISTRY)


def model_entry(name: str) -> ModelEntry:
    if name not in REGISTRY:
        raise NotFoundError(f"unknown model {name!r}; known: {', '.join(model_names())}")
    return REGISTRY[name]


def build_model(
    name: str,
    num_classes: int,
    drop_path_rate: float = 0.0,
    checkpoint: str | None = None,
    allow_random_standin: bool = False,
) -> nn.Module:
    """Instantiate a registered architecture, optionally loading weights.

    Stand-in entries for external teachers refuse to build without a
    checkpoint unless ``allow_random_standin`` is set (smoke runs only).
    """
    entry = model_entry(name)
    if entry.standin_for and checkpoint is None and not allow_random_standin:
        raise NotFoundError(
            f"{name!r} is an external frozen teacher; provide a checkpoint "
            f"(state dict for the {entry.standin_for} stand-in) or set "
            f"allow_random_standin=True for smoke runs"
        )
    if entry.standin_for and checkpoint is None:
        logger.warning(
            "building %s as a randomly initialized %s stand-in; results are "
            "not comparable to the published teacher", name, entry.standin_for
        )
    if drop_path_rate > 0 and not entry.supports_drop_path:
        logger.debug("model %s does not support stochastic depth; drop_path ignored", name)
        drop_path_rate = 0.0
    model = entry.builder(num_classes, drop_path_rate=drop_path_rate)
    if checkpoint is not None:
        state = torch.load(checkpoint, map_location="cpu", weights_only=True)
        if isinstance(state, dict) and "student" in state:
            state = state["student"]
        model.load_state_dict(state)
    return model


def resolve_tap(model: nn.Module, tap: str) -> nn.Module:
    modules = dict(model.named_modules())
    if tap not in modules:
        close = [m for m in modules if m and (tap in m or m in tap)][:5]
        hint = f"; similar: {close}" if close else ""
        raise TapError(f"no module named {tap!r} on {type(model).__name__}{hint}")
    return modules[tap]


class FeatureTaps:
    """Forward hooks that record named intermediate activations."""

    def __init__(self, model: nn.Module, taps: list[str]):
        self.model = model
        self.outputs: dict[str, torch.Tensor] = {}
        self._handles = []
        for tap in taps:
            module = resolve_tap(model, tap)
            self._handles.append(module.register_forward_hook(self._hook(tap)))

    def _hook(self, name: str):
        def fn(_module, _inputs, output):
            self.outputs[name] = output

        return fn

    def close(self) -> None:
        for h in self._handles:
            h.remove()
        self._handles.clear()

    def __enter__(self) -> "FeatureTaps":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
