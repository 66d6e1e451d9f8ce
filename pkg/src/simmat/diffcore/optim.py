"""Adam with bias correction, and the step-decay learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from ..errors import IntegrityError
from .params import Parameter

__all__ = ["AdamState", "adam_step", "Schedule", "lr_at_epoch"]


@dataclass
class AdamState:
    """First/second moment buffers per parameter plus the shared step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def buffers_for(self, param: Parameter):
        if param.name not in self.m:
            self.m[param.name] = np.zeros_like(param.data)
            self.v[param.name] = np.zeros_like(param.data)
        return self.m[param.name], self.v[param.name]


def adam_step(params: Mapping[str, Parameter], state: AdamState, lr: float,
              grads: Optional[Mapping[str, np.ndarray]] = None) -> AdamState:
    """One Adam update over every trainable parameter; frozen ones are untouched.

    Gradients default to the `.tensor.grad` buffers accumulated by backward().
    A trainable parameter without a gradient is an integrity violation.
    """
    missing = []
    updates = []
    for name in params:
        p = params[name]
        if not p.trainable:
            continue
        g = grads[name] if grads is not None else p.tensor.grad
        if g is None:
            missing.append(name)
        else:
            updates.append((p, np.asarray(g, dtype=np.float32)))
    if missing:
        raise IntegrityError(
            "missing gradient for trainable parameter(s): " + ", ".join(sorted(missing)))

    state.t += 1
    b1 = np.float32(state.beta1)
    b2 = np.float32(state.beta2)
    bias1 = np.float32(1.0 - state.beta1 ** state.t)
    bias2 = np.float32(1.0 - state.beta2 ** state.t)
    lr32 = np.float32(lr)
    eps = np.float32(state.eps)
    one = np.float32(1.0)
    for p, g in updates:
        m, v = state.buffers_for(p)
        m *= b1
        m += (one - b1) * g
        v *= b2
        v += (one - b2) * (g * g)
        mhat = m / bias1
        vhat = v / bias2
        p.tensor.data -= lr32 * mhat / (np.sqrt(vhat) + eps)
    return state


@dataclass(frozen=True)
class Schedule:
    """Step decay: lr(epoch) = base_lr * gamma ** floor(epoch / step_size_epochs)."""

    base_lr: float
    step_size_epochs: int = 10
    gamma: float = 0.5

    def __post_init__(self):
        if self.step_size_epochs < 1:
            raise ValueError("step_size_epochs must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")


def lr_at_epoch(schedule: Schedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return schedule.base_lr * schedule.gamma ** (epoch // schedule.step_size_epochs)
