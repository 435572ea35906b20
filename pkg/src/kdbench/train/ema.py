"""Exponential moving average of model parameters."""
from __future__ import annotations

import torch
from torch import nn


def ema_update(shadow: torch.Tensor, params: torch.Tensor, decay: float) -> torch.Tensor:
    """shadow <- decay * shadow + (1 - decay) * params, elementwise."""
    if not 0 <= decay < 1:
        raise ValueError(f"decay must be in [0, 1), got {decay}")
    return decay * shadow + (1.0 - decay) * params


class EmaShadow:
    """Shadow copy of a model's floating-point state."""

    def __init__(self, model: nn.Module, decay: float):
        if not 0 <= decay < 1:
            raise ValueError(f"decay must be in [0, 1), got {decay}")
        self.decay = decay
        self.state = {
            k: v.detach().clone().float()
            for k, v in model.state_dict().items()
            if v.dtype.is_floating_point
        }

    @torch.no_grad()
    def update(self, model: nn.Module) -> None:
        for k, v in model.state_dict().items():
            if k in self.state:
                self.state[k].mul_(self.decay).add_(v.float(), alpha=1.0 - self.decay)

    def copy_to(self, model: nn.Module) -> None:
        model.load_state_dict({**model.state_dict(), **self.state}, strict=True)

    def state_dict(self) -> dict:
        return {"decay": self.decay, "state": self.state}

    def load_state_dict(self, payload: dict) -> None:
        self.decay = payload["decay"]
        self.state = payload["state"]
