"""AdamW with decoupled weight decay and a warm-up + cosine learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class LrSchedule:
    max_lr: float = 4e-4
    warmup_steps: int = 1000
    total_steps: int = 20000
    floor_lr: float = 0.0

    def __post_init__(self):
        if not 0 <= self.warmup_steps < self.total_steps:
            raise ValueError("need 0 <= warmup_steps < total_steps")

    def lr_at(self, step: int) -> float:
        """Linear ramp to ``max_lr`` over the warm-up, then cosine decay to ``floor_lr``."""
        if step <= self.warmup_steps:
            if self.warmup_steps == 0:
                return self.max_lr
            return self.max_lr * step / self.warmup_steps
        if step >= self.total_steps:
            return self.floor_lr
        frac = (step - self.warmup_steps) / (self.total_steps - self.warmup_steps)
        return self.floor_lr + 0.5 * (self.max_lr - self.floor_lr) * (1.0 + math.cos(math.pi * frac))


def lr_at(step: int, schedule: LrSchedule) -> float:
    return schedule.lr_at(step)


@dataclass
class OptimizerState:
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "betas": list(self.betas), "eps": self.eps, "weight_decay": self.weight_decay,
            "step": self.step,
            "m": {k: a.tolist() for k, a in self.m.items()},
            "v": {k: a.tolist() for k, a in self.v.items()},
        }

    @classmethod
    def from_dict(cls, d: dict, dtype=np.float64) -> "OptimizerState":
        return cls(tuple(d["betas"]), d["eps"], d["weight_decay"], d["step"],
                   {k: np.asarray(a, dtype=dtype) for k, a in d["m"].items()},
                   {k: np.asarray(a, dtype=dtype) for k, a in d["v"].items()})


def adamw_step(params: dict, grads: dict, state: OptimizerState, lr: float) -> None:
    """In-place AdamW update of the arrays in ``params``.

    Weight decay is decoupled from the adaptive step and applied only to
    parameters with two or more dimensions (matrices, not biases or norms).
    """
    state.step += 1
    b1, b2 = state.betas
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        if m.shape != p.shape:
            raise ValueError(f"optimizer moment shape {m.shape} does not match parameter {name} {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.weight_decay and p.ndim >= 2:
            p -= lr * state.weight_decay * p
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class AdamW:
    """Thin stateful wrapper over :func:`adamw_step` for a dict of tensors."""

    def __init__(self, params: dict, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = params
        self.state = OptimizerState(tuple(betas), eps, weight_decay)

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def step(self, lr: float):
        arrays = {k: t.data for k, t in self.params.items()}
        grads = {k: t.grad for k, t in self.params.items()}
        adamw_step(arrays, grads, self.state, lr)
