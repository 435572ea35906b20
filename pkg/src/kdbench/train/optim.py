"""Optimizers and the warmup + cosine learning-rate schedule.

LAMB follows its reference formulation (bias-corrected Adam moments,
decoupled weight decay inside the update, per-parameter trust ratio).
Weight decay is skipped for normalization parameters and biases across
all optimizers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import torch
from torch import nn
from torch.optim import SGD, AdamW, Optimizer

from ..errors import ConfigError
from ..recipes import TrainingRecipe


@dataclass
class ScheduleState:
    total_steps: int
    warmup_steps: int
    base_lr: float
    step: int = 0
    current_lr: float = 0.0


def lr_at(state: ScheduleState, step: int) -> float:
    """Linear warmup to base_lr, then cosine decay to zero."""
    if step < 0 or step > state.total_steps:
        raise ConfigError(f"step {step} outside [0, {state.total_steps}]")
    if state.warmup_steps > 0 and step < state.warmup_steps:
        return state.base_lr * step / state.warmup_steps
    span = max(state.total_steps - state.warmup_steps, 1)
    progress = (step - state.warmup_steps) / span
    return state.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


class Lamb(Optimizer):
    """Layer-wise adaptive moments for large-batch training."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-6, weight_decay=0.0):
        if lr < 0:
            raise ValueError(f"invalid learning rate {lr}")
        if not 0 <= betas[0] < 1 or not 0 <= betas[1] < 1:
            raise ValueError(f"invalid betas {betas}")
        defaults = dict(lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
        super().__init__(params, defaults)

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()
        for group in self.param_groups:
            beta1, beta2 = group["betas"]
            eps = group["eps"]
            wd = group["weight_decay"]
            lr = group["lr"]
            for p in group["params"]:
                if p.grad is None:
                    continue
                grad = p.grad
                state = self.state[p]
                if not state:
                    state["step"] = 0
                    state["exp_avg"] = torch.zeros_like(p)
                    state["exp_avg_sq"] = torch.zeros_like(p)
                state["step"] += 1
                t = state["step"]
                m, v = state["exp_avg"], state["exp_avg_sq"]
                m.mul_(beta1).add_(grad, alpha=1 - beta1)
                v.mul_(beta2).addcmul_(grad, grad, value=1 - beta2)
                m_hat = m / (1 - beta1**t)
                v_hat = v / (1 - beta2**t)
                update = m_hat / (v_hat.sqrt() + eps)
                if wd != 0:
                    update = update + wd * p
                w_norm = p.norm()
                u_norm = update.norm()
                if w_norm > 0 and u_norm > 0:
                    trust = (w_norm / u_norm).item()
                else:
                    trust = 1.0
                p.add_(update, alpha=-lr * trust)
        return loss


def param_groups(modules: Iterable[nn.Module], weight_decay: float) -> list[dict]:
    """Split parameters so biases and norm weights skip weight decay."""
    decay, no_decay = [], []
    for module in modules:
        for _, p in module.named_parameters():
            if not p.requires_grad:
                continue
            (no_decay if p.ndim <= 1 else decay).append(p)
    groups = [{"params": decay, "weight_decay": weight_decay}]
    if no_decay:
        groups.append({"params": no_decay, "weight_decay": 0.0})
    return groups


def build_optimizer(modules: Iterable[nn.Module], recipe: TrainingRecipe) -> Optimizer:
    groups = param_groups(modules, recipe.weight_decay)
    if recipe.optimizer == "sgd":
        return SGD(groups, lr=recipe.base_lr, momentum=recipe.momentum, nesterov=False)
    if recipe.optimizer == "adamw":
        return AdamW(groups, lr=recipe.base_lr, betas=tuple(recipe.betas), eps=recipe.opt_eps)
    if recipe.optimizer == "lamb":
        return Lamb(groups, lr=recipe.base_lr, betas=tuple(recipe.betas), eps=recipe.opt_eps)
    raise ConfigError(f"unknown optimizer {recipe.optimizer!r}")
