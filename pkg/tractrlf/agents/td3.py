"""
TD3: twin critics, target policy smoothing, delayed actor updates and polyak
target tracking, trained by interaction with phantom tracking environments.
"""

import logging
from typing import Optional, Sequence

import numpy as np

from tractrlf.agents.networks import (
    CRITICS,
    ExplorationPolicy,
    act,
    actor_forward,
    critic_forward,
    init_td3_params,
)
from tractrlf.agents.replay import ReplayBuffer, TransitionBatch
from tractrlf.core.logs import progress
from tractrlf.core.rng import stream
from tractrlf.diffcore import ops
from tractrlf.diffcore.optim import AdamW
from tractrlf.diffcore.params import ModelParams, polyak_update
from tractrlf.diffcore.tensor import Tape, backward
from tractrlf.env import Rollout, TrackingSpace, collect_rollouts, generate_seeds, state_dim
from tractrlf.schemas.env import EnvConfig
from tractrlf.schemas.td3 import TD3Config

logger = logging.getLogger(__name__)


class TD3Optimizers:
    def __init__(self, params: ModelParams, cfg: TD3Config):
        self.actor = AdamW(params, cfg.lr, prefixes=("actor.",))
        self.critic = AdamW(params, cfg.lr, prefixes=tuple(f"{c}." for c in CRITICS))


def critic_targets(target_params: ModelParams, batch: TransitionBatch, cfg: TD3Config, rng) -> np.ndarray:
    """y = r + gamma * (1 - done) * min(Q1', Q2')(s', smoothed target action). Target nets only."""
    a_next = act(target_params, batch.s_next)
    noise = np.clip(rng.normal(0.0, cfg.target_noise, size=a_next.shape), -cfg.target_noise_clip, cfg.target_noise_clip)
    a_next = np.clip(a_next + noise, -1.0, 1.0)
    q_next = np.minimum(
        *(critic_forward(target_params, batch.s_next, a_next, name, cfg.critic_output).data[:, 0] for name in CRITICS)
    )
    return batch.r + cfg.gamma * (1.0 - batch.done) * q_next


def critic_loss(params: ModelParams, batch: TransitionBatch, y: np.ndarray, cfg: TD3Config):
    target = y[:, None]
    total = None
    for name in CRITICS:
        err = critic_forward(params, batch.s, batch.a, name, cfg.critic_output) - target
        term = ops.mean(err * err)
        total = term if total is None else total + term
    return total


def actor_loss(params: ModelParams, batch: TransitionBatch, cfg: TD3Config):
    q = critic_forward(params, batch.s, actor_forward(params, batch.s), CRITICS[0], cfg.critic_output)
    return -ops.mean(q)


def td3_update(
    params: ModelParams,
    target_params: ModelParams,
    batch: TransitionBatch,
    cfg: TD3Config,
    step_index: int,
    optimizers: TD3Optimizers,
    rng: np.random.Generator,
) -> dict[str, Optional[float]]:
    y = critic_targets(target_params, batch, cfg, rng)
    with Tape() as tape:
        loss_q = critic_loss(params, batch, y, cfg)
    optimizers.critic.step(backward(tape, loss_q, params))
    losses = {"critic_loss": loss_q.item(), "actor_loss": None}

    if step_index % cfg.policy_delay == 0:
        with Tape() as tape:
            loss_pi = actor_loss(params, batch, cfg)
        optimizers.actor.step(backward(tape, loss_pi, params))
        polyak_update(target_params, params, cfg.polyak_tau)
        losses["actor_loss"] = loss_pi.item()
    return losses


class _SeedCycler:
    """Shuffled, endlessly cycling seed pool for one tracking space."""

    def __init__(self, space: TrackingSpace, env_cfg: EnvConfig, rng_seed: int, key: int):
        self.seeds = generate_seeds(space.mask, env_cfg.seeds_per_voxel, rng_seed)
        self.order = stream(rng_seed, "seed-order", key).permutation(len(self.seeds))
        self.cursor = 0

    def next(self) -> np.ndarray:
        seed = self.seeds[self.order[self.cursor % len(self.order)]]
        self.cursor += 1
        return seed


def train_td3(
    spaces: Sequence[TrackingSpace],
    env_cfg: EnvConfig,
    cfg: TD3Config,
    episodes_budget: int,
    rng_seed: int,
    threads: int = 1,
) -> tuple[ModelParams, list[dict]]:
    """
    Alternate batches of exploration episodes (round-robin over spaces) with
    TD3 updates. Returns the online parameters and one log record per batch.
    """
    dim = state_dim(spaces[0].n_coeff, env_cfg.n_prev_dirs)
    params = init_td3_params(cfg, dim, stream(rng_seed, "td3-init"))
    if episodes_budget <= 0:
        return params, []

    target = params.copy()
    optimizers = TD3Optimizers(params, cfg)
    buffer = ReplayBuffer(cfg.buffer_capacity, dim)
    cyclers = [_SeedCycler(space, env_cfg, rng_seed, k) for k, space in enumerate(spaces)]
    update_rng = stream(rng_seed, "td3-update")
    log: list[dict] = []
    episode = 0
    update_step = 0

    n_batches = -(-episodes_budget // cfg.episodes_per_batch)
    for batch_index in progress(range(n_batches), desc="td3", unit="batch"):
        count = min(cfg.episodes_per_batch, episodes_budget - episode)
        rollouts: dict[int, Rollout] = {}
        for k, space in enumerate(spaces):
            indices = [episode + j for j in range(count) if (episode + j) % len(spaces) == k]
            if not indices:
                continue
            seeds = [cyclers[k].next() for _ in indices]
            results = collect_rollouts(
                space,
                env_cfg,
                lambda j, env, idx=indices: ExplorationPolicy(
                    params, cfg.sigma_train, stream(rng_seed, "explore", idx[j])
                ),
                seeds,
                threads,
            )
            rollouts.update(zip(indices, results))
        episode += count

        ordered = [rollouts[i] for i in sorted(rollouts)]
        n_transitions = 0
        for r in ordered:
            buffer.extend(r.transitions)
            n_transitions += len(r.transitions)

        critic_losses, actor_losses = [], []
        if len(buffer) >= max(cfg.warmup_transitions, 1):
            for _ in range(int(round(n_transitions * cfg.updates_per_step))):
                update_step += 1
                losses = td3_update(
                    params, target, buffer.sample(cfg.minibatch, update_rng), cfg, update_step, optimizers, update_rng
                )
                critic_losses.append(losses["critic_loss"])
                if losses["actor_loss"] is not None:
                    actor_losses.append(losses["actor_loss"])

        returns = np.array([r.total_return for r in ordered])
        lengths = np.array([len(r.transitions) for r in ordered])
        record = {
            "batch": batch_index,
            "episodes": episode,
            "updates": update_step,
            "mean_return": float(returns.mean()),
            "mean_length": float(lengths.mean()),
            "mean_step_reward": float(returns.sum() / max(lengths.sum(), 1)),
            "critic_loss": float(np.mean(critic_losses)) if critic_losses else None,
            "actor_loss": float(np.mean(actor_losses)) if actor_losses else None,
        }
        log.append(record)
        logger.info("td3 batch", extra={"fields": record})
    return params, log
