from dataclasses import dataclass
from typing import Iterable

import numpy as np

from tractrlf.core.errors import UsageError
from tractrlf.env import Transition


@dataclass(frozen=True)
class TransitionBatch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray

    def __len__(self) -> int:
        return len(self.r)

    @classmethod
    def from_transitions(cls, transitions: Iterable[Transition]) -> "TransitionBatch":
        ts = list(transitions)
        return cls(
            s=np.stack([t.s for t in ts]),
            a=np.stack([t.a for t in ts]),
            r=np.array([t.r for t in ts]),
            s_next=np.stack([t.s_next for t in ts]),
            done=np.array([t.done for t in ts], dtype=np.float64),
        )


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling over its contents."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int = 3):
        if capacity < 1:
            raise UsageError("replay capacity must be >= 1")
        self.capacity = capacity
        self._s = np.zeros((capacity, state_dim))
        self._a = np.zeros((capacity, action_dim))
        self._r = np.zeros(capacity)
        self._s_next = np.zeros((capacity, state_dim))
        self._done = np.zeros(capacity)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, t: Transition) -> None:
        i = self._next
        self._s[i] = t.s
        self._a[i] = t.a
        self._r[i] = t.r
        self._s_next[i] = t.s_next
        self._done[i] = float(t.done)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def extend(self, transitions: Iterable[Transition]) -> None:
        for t in transitions:
            self.add(t)

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        if self._size == 0:
            raise UsageError("cannot sample an empty replay buffer")
        idx = rng.integers(0, self._size, size=batch_size)
        return TransitionBatch(self._s[idx], self._a[idx], self._r[idx], self._s_next[idx], self._done[idx])
