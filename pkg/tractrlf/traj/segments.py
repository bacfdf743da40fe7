from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from tractrlf.core.errors import UsageError
from tractrlf.traj.dataset import Trajectory, TrajectoryDataset


@dataclass(frozen=True)
class SegmentBatch:
    """K-step training windows; padded positions are zero with mask False."""

    rtg: np.ndarray  # (B, K, 1)
    states: np.ndarray  # (B, K, S)
    actions: np.ndarray  # (B, K, 3)
    timesteps: np.ndarray  # (B, K) int
    mask: np.ndarray  # (B, K) bool

    def __len__(self) -> int:
        return len(self.rtg)

    @property
    def K(self) -> int:
        return self.rtg.shape[1]


def window(traj: Trajectory, start: int, K: int, max_ep_len: int = 530) -> SegmentBatch:
    """One left-padded window of traj starting at `start` (batch of one)."""
    stop = min(start + K, len(traj))
    n = stop - start
    pad = K - n
    state_dim = traj.states.shape[1]
    rtg = np.zeros((1, K, 1))
    states = np.zeros((1, K, state_dim))
    actions = np.zeros((1, K, 3))
    timesteps = np.zeros((1, K), dtype=np.int64)
    mask = np.zeros((1, K), dtype=bool)
    rtg[0, pad:, 0] = traj.rtg[start:stop]
    states[0, pad:] = traj.states[start:stop]
    actions[0, pad:] = traj.actions[start:stop]
    timesteps[0, pad:] = np.minimum(np.arange(start, stop), max_ep_len - 1)
    mask[0, pad:] = True
    return SegmentBatch(rtg, states, actions, timesteps, mask)


def stack(segments: Sequence[SegmentBatch]) -> SegmentBatch:
    return SegmentBatch(
        np.concatenate([s.rtg for s in segments]),
        np.concatenate([s.states for s in segments]),
        np.concatenate([s.actions for s in segments]),
        np.concatenate([s.timesteps for s in segments]),
        np.concatenate([s.mask for s in segments]),
    )


def sample_segments(
    dataset: Union[TrajectoryDataset, Sequence[Trajectory]],
    K: int,
    batch: int,
    rng: np.random.Generator,
    max_ep_len: int = 530,
) -> SegmentBatch:
    """Uniform over (trajectory, start offset) pairs whose window fits, or offset 0 for short ones."""
    if K < 1:
        raise UsageError("K must be >= 1")
    trajectories = dataset.trajectories if isinstance(dataset, TrajectoryDataset) else list(dataset)
    if not trajectories:
        raise UsageError("cannot sample segments from an empty dataset")
    n_offsets = np.array([max(len(t) - K + 1, 1) for t in trajectories])
    bounds = np.cumsum(n_offsets)
    picks = rng.integers(0, bounds[-1], size=batch)
    segments = []
    for p in picks:
        k = int(np.searchsorted(bounds, p, side="right"))
        start = int(p - (bounds[k - 1] if k else 0))
        segments.append(window(trajectories[k], start, K, max_ep_len))
    return stack(segments)
