"""AdamW with decoupled weight decay, per-group learning rates and cosine annealing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import TASKS
from .errors import NonFiniteGradient

REFERENCE_LRS = {
    "backbone": 1e-5,
    "tag_head": 5e-4,
    "scale_head": 3e-5,
    "sign_head": 2e-5,
    "time_head": 1e-5,
}
GROUPS = ("backbone", "gate", *(f"{a}_head" for a in TASKS))


@dataclass
class OptimConfig:
    base_lrs: dict = field(default_factory=lambda: dict(REFERENCE_LRS))
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 30
    batch_size: int = 64
    eta_min: float = 1e-7
    # gates follow the backbone rate unless overridden
    gate_lr: float | None = None

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if self.eta_min > min(self.group_lrs().values()):
            raise ValueError("eta_min exceeds the smallest base learning rate")

    def group_lrs(self) -> dict:
        lrs = dict(self.base_lrs)
        lrs["gate"] = self.gate_lr if self.gate_lr is not None else lrs["backbone"]
        return lrs


def cosine_lr(step: int, total_steps: int, base_lr: float, eta_min: float) -> float:
    if total_steps < 1 or not 0 <= step <= total_steps:
        raise ValueError("need total_steps >= 1 and 0 <= step <= total_steps")
    return eta_min + 0.5 * (base_lr - eta_min) * (1.0 + math.cos(math.pi * step / total_steps))


def assign_param_groups(params) -> dict:
    """Tensor name -> optimizer group.

    Embedding, trunk and gate tensors train with the backbone; the ``gate``
    group only differs when ``gate_lr`` is set.
    """
    groups = {}
    for name in params.tensors if hasattr(params, "tensors") else params:
        if name.startswith("head_"):
            groups[name] = name.split(".", 1)[1] + "_head"
        elif name.startswith("gate_"):
            groups[name] = "gate"
        else:
            groups[name] = "backbone"
    return groups


def effective_group(group: str) -> str:
    """Group as reported against the five reference rates (gates live in the backbone)."""
    return "backbone" if group == "gate" else group


@dataclass
class OptimState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros(cls, params) -> "OptimState":
        return cls({n: np.zeros_like(t) for n, t in params.items()},
                   {n: np.zeros_like(t) for n, t in params.items()})

    def copy(self) -> "OptimState":
        return OptimState({n: t.copy() for n, t in self.m.items()},
                          {n: t.copy() for n, t in self.v.items()}, self.step)


def adamw_step(params, grads, state: OptimState, lrs_now: dict, config: OptimConfig,
               frozen=()):
    """One in-place AdamW update. ``lrs_now`` maps group -> current learning rate."""
    for n, g in grads.items():
        if n not in frozen and not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for {n}")
    state.step += 1
    t = state.step
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    groups = assign_param_groups(params)
    for n, p in params.items():
        if n in frozen:
            continue
        g = grads[n]
        lr = lrs_now[groups[n]]
        m = state.m[n]
        v = state.v[n]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        upd = lr * (m / c1) / (np.sqrt(v / c2) + config.eps) + lr * config.weight_decay * p
        params[n] = p - upd
    return params, state


def current_lrs(config: OptimConfig, step: int, total_steps: int) -> dict:
    return {g: cosine_lr(step, total_steps, lr, config.eta_min)
            for g, lr in config.group_lrs().items()}
