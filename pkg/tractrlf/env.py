"""
Tracking environment: state assembly, reward, termination, seeding and rollouts.

The state is `[v0 shc, v0 mask, ..., v6 shc, v6 mask, dir_{t-1}, ..., dir_{t-4}]`
(7 x 46 + 12 = 334 values for order-8 fields).
"""

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from tractrlf.core.errors import EpisodeFinishedError, SeedOutsideMaskError, UsageError
from tractrlf.core.rng import stream
from tractrlf.field.grid import NEIGHBOUR_COUNT, NeighbourhoodSampler, SHField, TrackingMask
from tractrlf.schemas.env import EnvConfig
from tractrlf.sh import PeakVolume

logger = logging.getLogger(__name__)

DEGENERATE_NORM = 1e-8


class DoneReason(str, enum.Enum):
    MASK_EXIT = "mask_exit"
    MAX_LENGTH = "max_length"
    SHARP_ANGLE = "sharp_angle"
    DEGENERATE_ACTION = "degenerate_action"


def state_dim(n_coeff: int = 45, n_prev_dirs: int = 4) -> int:
    return NEIGHBOUR_COUNT * (n_coeff + 1) + 3 * n_prev_dirs


def assemble_state(blocks: np.ndarray, prev_dirs: np.ndarray) -> np.ndarray:
    return np.concatenate([np.asarray(blocks).ravel(), np.asarray(prev_dirs).ravel()])


def disassemble_state(state: np.ndarray, n_coeff: int = 45, n_prev_dirs: int = 4):
    """Split a state into (shc (7, n_coeff), mask (7,), prev_dirs (n_prev, 3))."""
    state = np.asarray(state)
    if state.shape[-1] != state_dim(n_coeff, n_prev_dirs):
        raise UsageError(f"state of length {state.shape[-1]} does not match the layout")
    split = NEIGHBOUR_COUNT * (n_coeff + 1)
    blocks = state[:split].reshape(NEIGHBOUR_COUNT, n_coeff + 1)
    return blocks[:, :n_coeff], blocks[:, n_coeff], state[split:].reshape(n_prev_dirs, 3)


def reward(a, peaks: np.ndarray, u_prev: Optional[np.ndarray] = None) -> float:
    """
    r = max_i |p_i . a_hat| * (a_hat . u_prev); the weight is 1 when there is no
    previous step. Zero for degenerate actions or voxels without peaks.
    """
    a = np.asarray(a, dtype=np.float64)
    norm = float(np.linalg.norm(a))
    peaks = np.asarray(peaks, dtype=np.float64).reshape(-1, 3)
    if norm < DEGENERATE_NORM or len(peaks) == 0:
        return 0.0
    a_hat = a / norm
    alignment = float(np.max(np.abs(peaks @ a_hat)))
    if u_prev is None:
        return alignment
    u_prev = np.asarray(u_prev, dtype=np.float64)
    return alignment * float(a_hat @ (u_prev / np.linalg.norm(u_prev)))


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool
    done_reason: Optional[DoneReason] = None


class TrackingSpace:
    """Read-only data shared by any number of environment instances."""

    def __init__(self, field: SHField, mask: TrackingMask, peaks: PeakVolume):
        if mask.count == 0:
            raise UsageError("tracking mask is empty")
        self.field = field
        self.mask = mask
        self.peaks = peaks
        self.sampler = NeighbourhoodSampler(field, mask)
        self.n_coeff = field.n_coeff

    def peaks_at(self, voxel) -> np.ndarray:
        if not self.field.spec.in_grid(voxel):
            return np.zeros((0, 3))
        return self.peaks.at(voxel)


class TrackingEnv:
    """Single-owner episode state over a shared TrackingSpace."""

    def __init__(self, space: TrackingSpace, cfg: EnvConfig):
        self.space = space
        self.cfg = cfg
        self.state_dim = state_dim(space.n_coeff, cfg.n_prev_dirs)
        self._pos: Optional[np.ndarray] = None
        self._prev = np.zeros((cfg.n_prev_dirs, 3))
        self._n_hist = 0
        self._n_steps = 0
        self._done = True
        self._state: Optional[np.ndarray] = None

    @classmethod
    def create(cls, field: SHField, mask: TrackingMask, peaks: PeakVolume, cfg: EnvConfig) -> "TrackingEnv":
        return cls(TrackingSpace(field, mask, peaks), cfg)

    @property
    def position(self) -> np.ndarray:
        return self._pos.copy()

    @property
    def n_steps(self) -> int:
        return self._n_steps

    @property
    def done(self) -> bool:
        return self._done

    @property
    def last_direction(self) -> Optional[np.ndarray]:
        return self._prev[0].copy() if self._n_hist else None

    def _assemble(self) -> np.ndarray:
        voxel = self.space.field.spec.containing_voxel(self._pos)
        return assemble_state(self.space.sampler.blocks(voxel)[0], self._prev)

    def reset(self, seed_point_mm) -> np.ndarray:
        seed = np.asarray(seed_point_mm, dtype=np.float64)
        if not self.space.mask.contains_point(seed):
            raise SeedOutsideMaskError(f"seed {seed.tolist()} lies outside the tracking mask")
        self._pos = seed.copy()
        self._prev = np.zeros((self.cfg.n_prev_dirs, 3))
        self._n_hist = 0
        self._n_steps = 0
        self._done = False
        self._state = self._assemble()
        return self._state.copy()

    def step(self, action) -> Transition:
        if self._done:
            raise EpisodeFinishedError("step called on a finished episode; call reset first")
        a = np.clip(np.asarray(action, dtype=np.float64).reshape(3), -1.0, 1.0)
        s = self._state
        norm = float(np.linalg.norm(a))
        if norm < DEGENERATE_NORM:
            self._done = True
            return Transition(s, a, 0.0, s, True, DoneReason.DEGENERATE_ACTION)

        a_hat = a / norm
        u_prev = self.last_direction
        pre_voxel = self.space.field.spec.containing_voxel(self._pos)
        r = reward(a_hat, self.space.peaks_at(pre_voxel), u_prev)

        self._pos = self._pos + self.cfg.step * a_hat
        if self.cfg.n_prev_dirs:
            self._prev = np.roll(self._prev, 1, axis=0)
            self._prev[0] = a_hat
        self._n_hist += 1
        self._n_steps += 1
        self._state = self._assemble()

        reason = None
        if u_prev is not None and float(a_hat @ u_prev) < self.cfg.cos_max_angle:
            reason = DoneReason.SHARP_ANGLE
        elif not self.space.mask.contains_point(self._pos):
            reason = DoneReason.MASK_EXIT
        elif self._n_steps >= self.cfg.max_steps or self._n_steps * self.cfg.step >= self.cfg.max_len_mm:
            reason = DoneReason.MAX_LENGTH
        self._done = reason is not None
        return Transition(s, a, r, self._state.copy(), self._done, reason)


def generate_seeds(mask: TrackingMask, seeds_per_voxel: int, rng_seed: int) -> np.ndarray:
    """Uniform seeds inside every mask voxel, keyed by (rng_seed, voxel index)."""
    if mask.count == 0:
        raise UsageError("cannot seed an empty mask")
    if seeds_per_voxel < 1:
        raise UsageError("seeds_per_voxel must be >= 1")
    voxels = mask.indices()
    dims = mask.spec.dims
    out = np.empty((len(voxels) * seeds_per_voxel, 3))
    for n, ijk in enumerate(voxels):
        flat = int(ijk[0] + dims[0] * (ijk[1] + dims[1] * ijk[2]))
        u = stream(rng_seed, "seed", flat).random((seeds_per_voxel, 3))
        out[n * seeds_per_voxel : (n + 1) * seeds_per_voxel] = mask.spec.voxel_to_world(ijk + u)
    return out


class Policy(Protocol):
    def __call__(self, state: np.ndarray) -> np.ndarray: ...


@dataclass
class Rollout:
    streamline: np.ndarray
    transitions: list[Transition]
    step_size_mm: float
    min_len_mm: float
    seed_index: int = 0
    rewards: np.ndarray = field(init=False)

    def __post_init__(self):
        self.rewards = np.array([t.r for t in self.transitions], dtype=np.float64)

    @property
    def length_mm(self) -> float:
        return (len(self.streamline) - 1) * self.step_size_mm

    @property
    def discarded(self) -> bool:
        return self.length_mm < self.min_len_mm

    @property
    def total_return(self) -> float:
        return float(self.rewards.sum())

    @property
    def done_reason(self) -> Optional[DoneReason]:
        return self.transitions[-1].done_reason if self.transitions else None


def rollout(env: TrackingEnv, policy: Policy, seed_point, seed_index: int = 0) -> Rollout:
    """Run one episode. Policies with an `observe(transition)` method see every transition."""
    state = env.reset(seed_point)
    points = [env.position]
    transitions = []
    observe = getattr(policy, "observe", None)
    while True:
        tr = env.step(policy(state))
        transitions.append(tr)
        if observe is not None:
            observe(tr)
        if tr.done_reason not in (DoneReason.SHARP_ANGLE, DoneReason.DEGENERATE_ACTION):
            points.append(env.position)
        if tr.done:
            break
        state = tr.s_next
    return Rollout(np.array(points), transitions, env.cfg.step, env.cfg.min_len_mm, seed_index)


def collect_rollouts(
    space: TrackingSpace,
    cfg: EnvConfig,
    policy_factory: Callable[[int, TrackingEnv], Policy],
    seeds: Sequence[np.ndarray],
    threads: int = 1,
) -> list[Rollout]:
    """Rollouts in seed order; each seed gets its own environment and policy instance."""

    def run(index: int) -> Rollout:
        env = TrackingEnv(space, cfg)
        return rollout(env, policy_factory(index, env), seeds[index], seed_index=index)

    if threads <= 1:
        return [run(i) for i in range(len(seeds))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, range(len(seeds))))


class PeakFollowingPolicy:
    """Oracle that steps along the ground-truth peak closest to the previous direction."""

    def __init__(self, env: TrackingEnv, peaks: Optional[PeakVolume] = None):
        self.env = env
        self.peaks = peaks or env.space.peaks

    def __call__(self, state: np.ndarray) -> np.ndarray:
        voxel = self.env.space.field.spec.containing_voxel(self.env.position)
        if not self.env.space.field.spec.in_grid(voxel):
            return np.zeros(3)
        candidates = self.peaks.at(voxel)
        if len(candidates) == 0:
            return np.zeros(3)
        u_prev = self.env.last_direction
        if u_prev is None:
            return candidates[0].copy()
        dots = candidates @ u_prev
        best = int(np.argmax(np.abs(dots)))
        return candidates[best] * np.sign(dots[best] or 1.0)
