"""
Trajectories of (return-to-go, state, action) and the two dataset selection rules.

Both rules take half of a quota as the longest trajectories and the other half
uniformly from what remains. Longest-first ordering breaks ties by
(source order, rollout index); selected trajectories keep their original order.
"""

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from tractrlf.core.errors import InsufficientTrajectoriesError, ShapeError, UsageError
from tractrlf.core.rng import stream
from tractrlf.env import Rollout
from tractrlf.schemas.traj import SelectionManifest

logger = logging.getLogger(__name__)

HALF_LONGEST_HALF_RANDOM = "half_longest_half_uniform_remainder"


def returns_to_go(rewards) -> np.ndarray:
    """
    Suffix sums of the reward list.

    Example:
        >>> returns_to_go([0.5, 0.25, 1.0]).tolist()
        [1.75, 1.25, 1.0]
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc += rewards[t]
        out[t] = acc
    return out


@dataclass(frozen=True)
class Trajectory:
    rtg: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    tract_id: int = 0

    def __post_init__(self):
        n = len(self.rtg)
        if n < 1:
            raise ShapeError("trajectory must have at least one step")
        if self.states.ndim != 2 or self.actions.shape != (n, 3) or len(self.states) != n:
            raise ShapeError(
                f"trajectory lengths disagree: rtg {n}, states {self.states.shape}, actions {self.actions.shape}"
            )

    def __len__(self) -> int:
        return len(self.rtg)

    @property
    def rewards(self) -> np.ndarray:
        return self.rtg - np.append(self.rtg[1:], 0.0)

    @property
    def total_return(self) -> float:
        return float(self.rtg[0])

    @classmethod
    def from_rewards(cls, rewards, states, actions, tract_id: int = 0) -> "Trajectory":
        return cls(
            returns_to_go(rewards),
            np.asarray(states, dtype=np.float64),
            np.asarray(actions, dtype=np.float64),
            tract_id,
        )


def from_rollout(r: Rollout, tract_id: int, max_ep_len: int = 530) -> Optional[Trajectory]:
    """Trajectory of a kept rollout, truncated to max_ep_len; None for discarded or empty rollouts."""
    if r.discarded or not r.transitions:
        return None
    transitions = r.transitions[:max_ep_len]
    return Trajectory.from_rewards(
        [t.r for t in transitions],
        np.stack([t.s for t in transitions]),
        np.stack([t.a for t in transitions]),
        tract_id,
    )


@dataclass(frozen=True)
class TrajectoryDataset:
    trajectories: list[Trajectory]
    manifest: SelectionManifest

    def __post_init__(self):
        if self.manifest.total != len(self.trajectories):
            raise UsageError(
                f"manifest counts {self.manifest.total} disagree with {len(self.trajectories)} trajectories"
            )

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def kind(self) -> str:
        return self.manifest.kind

    @property
    def max_return(self) -> float:
        """Largest recorded episode return (the `dataset_max` conditioning target)."""
        return max(t.total_return for t in self.trajectories)


def _split_quota(n_total: int, n_parts: int) -> list[int]:
    base, extra = divmod(n_total, n_parts)
    return [base + (1 if k < extra else 0) for k in range(n_parts)]


def _select(
    keyed: list[tuple[int, int, Trajectory]], quota: int, rng: np.random.Generator
) -> tuple[list[tuple[int, int, Trajectory]], set]:
    """Take ceil(quota/2) longest and floor(quota/2) uniform from the rest."""
    n_longest = math.ceil(quota / 2)
    ranked = sorted(keyed, key=lambda e: (-len(e[2]), e[0], e[1]))
    longest = ranked[:n_longest]
    remainder = sorted(ranked[n_longest:], key=lambda e: (e[0], e[1]))
    n_random = quota - n_longest
    picks = rng.choice(len(remainder), size=n_random, replace=False) if n_random else []
    chosen = longest + [remainder[i] for i in picks]
    chosen.sort(key=lambda e: (e[0], e[1]))
    return chosen, {(e[0], e[1]) for e in longest}


def build_tract_dataset(
    sources: Mapping[str, Sequence[Trajectory]], n_total: int, rng_seed: int
) -> TrajectoryDataset:
    """Per-source quotas of n_total / n_sources, each split half longest, half uniform."""
    if not sources:
        raise UsageError("no trajectory sources")
    if n_total < 1:
        raise UsageError("n_total must be >= 1")
    names = list(sources)
    quotas = _split_quota(n_total, len(names))
    selected: list[Trajectory] = []
    counts: dict[str, dict[str, int]] = {}
    for k, (name, quota) in enumerate(zip(names, quotas)):
        pool = list(sources[name])
        if len(pool) < quota:
            raise InsufficientTrajectoriesError(name, quota, len(pool))
        keyed = [(k, i, t) for i, t in enumerate(pool)]
        chosen, longest = _select(keyed, quota, stream(rng_seed, "select-tract", k))
        selected.extend(t for _, _, t in chosen)
        counts[name] = {"longest": len(longest), "random": quota - len(longest)}

    manifest = SelectionManifest(
        kind="tract_specific", rule=HALF_LONGEST_HALF_RANDOM, rng_seed=rng_seed, n_total=n_total, counts=counts
    )
    logger.info("tract dataset built", extra={"fields": {"n_total": n_total, "sources": len(names)}})
    return TrajectoryDataset(selected, manifest)


def build_mixed_dataset(datasets: Sequence[TrajectoryDataset], n_total: int, rng_seed: int) -> TrajectoryDataset:
    """Pool every tract dataset and apply the half-longest rule once over the pool."""
    keyed = [(k, i, t) for k, ds in enumerate(datasets) for i, t in enumerate(ds.trajectories)]
    if len(keyed) < n_total:
        raise InsufficientTrajectoriesError("pool", n_total, len(keyed))
    if n_total < 1:
        raise UsageError("n_total must be >= 1")
    chosen, longest = _select(keyed, n_total, stream(rng_seed, "select-mixed"))

    counts: dict[str, dict[str, int]] = {}
    for k, i, t in chosen:
        entry = counts.setdefault(f"tract_{t.tract_id}", {"longest": 0, "random": 0})
        entry["longest" if (k, i) in longest else "random"] += 1
    manifest = SelectionManifest(
        kind="mixed", rule=HALF_LONGEST_HALF_RANDOM, rng_seed=rng_seed, n_total=n_total, counts=counts
    )
    logger.info("mixed dataset built", extra={"fields": {"n_total": n_total, "pool": len(keyed)}})
    return TrajectoryDataset([t for _, _, t in chosen], manifest)
