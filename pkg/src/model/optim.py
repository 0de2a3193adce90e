"""Adam with bias correction and global gradient-norm clipping."""

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from src.model.layers import Parameter
from src.utils.errors import NonFinite


@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the step counter."""
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    t: int = 0


def adam_step(
    params: Sequence[Parameter],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    betas=(0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    """
    One bias-corrected Adam update, in place.

    Raises:
        NonFinite: If a gradient or an updated parameter is NaN or infinite
    """
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.t += 1
    b1, b2 = betas

    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFinite("non-finite gradient", step=state.t)

    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
        if not np.all(np.isfinite(p.data)):
            raise NonFinite("non-finite parameter after update", step=state.t)


def clip_grad_norm(params: Sequence[Parameter], max_norm: float) -> float:
    """Scale gradients so their global L2 norm is at most max_norm; returns the norm before clipping."""
    grads = [p.grad for p in params if p.grad is not None]
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


class Adam:
    """Adam over a fixed parameter list; parameters without a gradient get a zero one."""

    def __init__(self, params: Sequence[Parameter], lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState()

    @property
    def steps(self) -> int:
        return self.state.t

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step(self.params, grads, self.state, self.lr, self.betas, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
