"""
Tensors and the recording tape.

Operations record onto the tape that is active in the current context
(`with Tape() as tape:`); outside a tape nothing is recorded and forward
passes cost no more than plain numpy.
"""

from contextvars import ContextVar
from typing import Callable, Optional, Sequence

import numpy as np

from tractrlf.core.errors import NumericalError, UsageError

_active_tape: ContextVar[Optional["Tape"]] = ContextVar("active_tape", default=None)
_debug: ContextVar[bool] = ContextVar("diffcore_debug", default=False)


def set_debug(enabled: bool) -> None:
    """Check every recorded forward value for NaN/inf."""
    _debug.set(bool(enabled))


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "parents", "backward_fn", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.parents: tuple = ()
        self.backward_fn: Optional[Callable] = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of primitive applications; creation order is topological."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_tape.reset(self._token)

    def __len__(self) -> int:
        return len(self.nodes)


def record(value: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """
    Wrap a forward value; when a tape is active and any parent needs a gradient,
    attach `backward_fn(grad) -> tuple of parent grads (or None)` and record.
    """
    if _debug.get() and not np.all(np.isfinite(value)):
        raise NumericalError("non-finite value produced in forward pass")
    out = Tensor(value)
    tape = _active_tape.get()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
        tape.nodes.append(out)
    return out


def backward(tape: Tape, loss: Tensor, params=None) -> Optional[dict]:
    """
    Reverse pass from a scalar loss. Gradients accumulate on every tensor that
    requires one; with `params` given, returns {segment: grad} for trainable
    segments (zeros where the loss does not depend on them) and clears them.
    """
    if loss.data.size != 1:
        raise UsageError(f"loss must be a scalar, got shape {loss.shape}")
    if params is not None:
        params.zero_grad()
    if loss.requires_grad:
        loss.grad = np.ones_like(loss.data)
        for node in reversed(tape.nodes):
            if node.grad is None:
                continue
            grads = node.backward_fn(node.grad)
            for parent, g in zip(node.parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if _debug.get() and not np.all(np.isfinite(g)):
                    raise NumericalError("non-finite gradient in backward pass")
                parent.grad = g if parent.grad is None else parent.grad + g
            if node.parents:
                node.grad = None
    if params is None:
        return None
    return params.collect_grads()
