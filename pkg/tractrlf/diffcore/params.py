"""Named parameter segments shared by every differentiable model."""

import math
from typing import Iterable, Iterator, Optional

import numpy as np

from tractrlf.core.errors import UsageError
from tractrlf.diffcore.tensor import Tensor


class ModelParams:
    def __init__(self):
        self._segments: dict[str, Tensor] = {}

    def add(self, name: str, value, trainable: bool = True) -> Tensor:
        if name in self._segments:
            raise UsageError(f"duplicate parameter segment {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=trainable, name=name)
        self._segments[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._segments[name]

    def __contains__(self, name: str) -> bool:
        return name in self._segments

    def __iter__(self) -> Iterator[str]:
        return iter(self._segments)

    def __len__(self) -> int:
        return len(self._segments)

    def items(self):
        return self._segments.items()

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._segments if n.startswith(prefix)]

    def trainable_names(self) -> list[str]:
        return [n for n, t in self._segments.items() if t.requires_grad]

    def is_trainable(self, name: str) -> bool:
        return self._segments[name].requires_grad

    def set_trainable(self, prefixes: Iterable[str], trainable: bool) -> None:
        prefixes = tuple(prefixes)
        for name, t in self._segments.items():
            if name.startswith(prefixes):
                t.requires_grad = trainable

    def n_params(self, prefix: str = "") -> int:
        return int(sum(t.data.size for n, t in self._segments.items() if n.startswith(prefix)))

    def zero_grad(self) -> None:
        for t in self._segments.values():
            t.grad = None

    def collect_grads(self) -> dict[str, np.ndarray]:
        grads = {}
        for name, t in self._segments.items():
            if t.requires_grad:
                grads[name] = t.grad if t.grad is not None else np.zeros_like(t.data)
            t.grad = None
        return grads

    def copy(self) -> "ModelParams":
        out = ModelParams()
        for name, t in self._segments.items():
            out.add(name, t.data.copy(), trainable=t.requires_grad)
        return out

    def state(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._segments.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, value in state.items():
            if self._segments[name].shape != np.shape(value):
                raise UsageError(f"shape mismatch loading {name!r}")
            self._segments[name].data[...] = value

    def merge(self, other: "ModelParams") -> None:
        for name, t in other.items():
            self.add(name, t.data.copy(), trainable=t.requires_grad)


def truncated_normal(rng: np.random.Generator, shape, std: float, bound: float = 2.0) -> np.ndarray:
    """Normal(0, std) resampled until every value lies within +-bound std."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > bound * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > bound * std
    return out


def add_linear(
    params: ModelParams,
    prefix: str,
    fan_in: int,
    fan_out: int,
    rng: np.random.Generator,
    std: Optional[float] = None,
    trainable: bool = True,
) -> None:
    """
    Weight (fan_in, fan_out) and bias (fan_out,). Uniform +-1/sqrt(fan_in) by
    default, truncated normal with zero bias when `std` is given.
    """
    if std is None:
        bound = 1.0 / math.sqrt(fan_in)
        weight = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        bias = rng.uniform(-bound, bound, size=(fan_out,))
    else:
        weight = truncated_normal(rng, (fan_in, fan_out), std)
        bias = np.zeros(fan_out)
    params.add(f"{prefix}.W", weight, trainable)
    params.add(f"{prefix}.b", bias, trainable)


def polyak_update(target: ModelParams, online: ModelParams, tau: float, prefix: str = "") -> None:
    """theta' <- tau * theta + (1 - tau) * theta'"""
    for name in online.names(prefix):
        target[name].data[...] = tau * online[name].data + (1.0 - tau) * target[name].data
