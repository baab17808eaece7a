"""Adam optimizer and the multiplicative per-epoch learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient in parameter {name!r}")
        self.name = name


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Mapping[str, object], **kwargs) -> "AdamState":
        state = cls(**kwargs)
        for name, p in params.items():
            shape = np.shape(getattr(p, "data", p))
            state.m[name] = np.zeros(shape)
            state.v[name] = np.zeros(shape)
        return state


def adam_step(params, grads: Mapping[str, np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``.

    ``params`` maps names to :class:`~mmgat.autodiff.Tensor` (or arrays);
    ``grads`` maps the same names to gradient arrays.  Every gradient is
    checked before anything is modified.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(name)
        if np.shape(g) != state.m[name].shape:
            raise ValueError(f"gradient shape {np.shape(g)} != {state.m[name].shape} for {name!r}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon)
        p = params[name]
        if hasattr(p, "data"):
            p.data -= update
        else:
            p -= update


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float = 1e-3
    factor: float = 0.995

    def __post_init__(self):
        if not 0.0 < self.factor <= 1.0:
            raise ValueError(f"lr factor must lie in (0, 1], got {self.factor}")


def lr_at_epoch(sched: LrSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return sched.base_lr * sched.factor ** epoch
