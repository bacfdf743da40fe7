from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from tractrlf.core.errors import UsageError
from tractrlf.diffcore.params import ModelParams


@dataclass
class AdamWState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adamw_step(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    state: AdamWState,
    lr: float,
    weight_decay: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    t: Optional[int] = None,
) -> None:
    """
    Decoupled weight decay: p <- p * (1 - lr * wd), then the bias-corrected
    Adam step. Frozen segments are never touched.
    """
    if lr <= 0:
        raise UsageError("learning rate must be > 0")
    t = state.t + 1 if t is None else t
    if t < 1:
        raise UsageError("AdamW step index must be >= 1")
    state.t = t
    b1, b2 = betas
    for name, g in grads.items():
        if not params.is_trainable(name):
            continue
        p = params[name].data
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m[...] = b1 * m + (1.0 - b1) * g
        v[...] = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p *= 1.0 - lr * weight_decay
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


class AdamW:
    """AdamW over the trainable segments whose names start with one of `prefixes`."""

    def __init__(
        self,
        params: ModelParams,
        lr: float,
        weight_decay: float = 0.0,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        prefixes: tuple[str, ...] = ("",),
    ):
        if lr <= 0:
            raise UsageError("learning rate must be > 0")
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.prefixes = prefixes
        self.state = AdamWState()

    def step(self, grads: dict[str, np.ndarray]) -> None:
        selected = {n: g for n, g in grads.items() if n.startswith(self.prefixes)}
        adamw_step(self.params, selected, self.state, self.lr, self.weight_decay, self.betas, self.eps)
