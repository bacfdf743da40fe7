"""Autoregressive tracking with a return-conditioned model."""

from typing import Optional

import numpy as np

from tractrlf.core.errors import UsageError
from tractrlf.diffcore.params import ModelParams
from tractrlf.env import Rollout, TrackingEnv, rollout
from tractrlf.schemas.trlf import TRLFConfig
from tractrlf.traj.dataset import TrajectoryDataset
from tractrlf.traj.segments import SegmentBatch
from tractrlf.transformer.model import forward


class ReturnConditionedPolicy:
    """
    Keeps the last K (rtg, state, action) steps. Each call feeds the window
    with the current action slot zeroed and reads the action at the newest
    state token; `observe` lowers the return-to-go by the achieved reward.
    """

    def __init__(self, params: ModelParams, cfg: TRLFConfig, rtg_init: Optional[float] = None):
        self.params = params
        self.cfg = cfg
        self.rtg = cfg.rtg_init if rtg_init is None else float(rtg_init)
        self.rtgs: list[float] = []
        self.states: list[np.ndarray] = []
        self.actions: list[np.ndarray] = []
        self.calls = 0

    def _window(self) -> SegmentBatch:
        K = self.cfg.K
        n = min(len(self.states), K)
        t0 = len(self.states) - n
        pad = K - n
        rtg = np.zeros((1, K, 1))
        states = np.zeros((1, K, len(self.states[0])))
        actions = np.zeros((1, K, 3))
        timesteps = np.zeros((1, K), dtype=np.int64)
        mask = np.zeros((1, K), dtype=bool)
        rtg[0, pad:, 0] = self.rtgs[t0:]
        states[0, pad:] = self.states[t0:]
        actions[0, pad:] = self.actions[t0:]
        timesteps[0, pad:] = np.minimum(np.arange(t0, t0 + n), self.cfg.max_ep_len - 1)
        mask[0, pad:] = True
        return SegmentBatch(rtg, states, actions, timesteps, mask)

    def __call__(self, state: np.ndarray) -> np.ndarray:
        self.rtgs.append(self.rtg)
        self.states.append(np.asarray(state, dtype=np.float64))
        self.actions.append(np.zeros(3))
        pred = forward(self.params, self._window(), self.cfg, training=False)
        self.calls += 1
        action = pred.data[0, -1].copy()
        self.actions[-1] = action
        return action

    def observe(self, transition) -> None:
        self.actions[-1] = np.asarray(transition.a, dtype=np.float64)
        self.rtg = self.rtg - transition.r


def resolve_rtg(
    cfg: TRLFConfig,
    dataset: Optional[TrajectoryDataset] = None,
    path_length_steps: Optional[float] = None,
) -> float:
    """Conditioning return for the configured rtg_mode."""
    if cfg.rtg_mode == "fixed":
        return cfg.rtg_init
    if cfg.rtg_mode == "dataset_max":
        if dataset is None:
            raise UsageError("rtg_mode dataset_max needs the training dataset")
        return dataset.max_return
    if path_length_steps is None:
        raise UsageError("rtg_mode phantom_path needs the phantom path length")
    return float(path_length_steps)


def generate(
    params: ModelParams,
    cfg: TRLFConfig,
    env: TrackingEnv,
    seed_point,
    rtg_init: Optional[float] = None,
    seed_index: int = 0,
) -> Rollout:
    return rollout(env, ReturnConditionedPolicy(params, cfg, rtg_init), seed_point, seed_index)
