"""
Two-stage training: pretrain the first blocks on the mixed dataset, then append
a fresh block and fine-tune it (with the head) on one tract's dataset.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from tractrlf.core.errors import UsageError
from tractrlf.core.logs import progress
from tractrlf.core.rng import stream
from tractrlf.diffcore.optim import AdamW
from tractrlf.diffcore.params import ModelParams
from tractrlf.diffcore.tensor import Tape, backward
from tractrlf.schemas.trlf import TRLFConfig
from tractrlf.traj.dataset import Trajectory, TrajectoryDataset
from tractrlf.traj.segments import sample_segments, stack, window
from tractrlf.transformer.loss import five_step_loss, term_weights
from tractrlf.transformer.model import (
    EMBEDDINGS,
    add_block,
    block_prefixes,
    count_blocks,
    forward,
    init_trlf_params,
)

logger = logging.getLogger(__name__)

IterationCallback = Callable[[int, ModelParams, dict], None]


@dataclass
class TrainingHistory:
    step_losses: list[float] = field(default_factory=list)
    iterations: list[dict] = field(default_factory=list)


def _run_iterations(
    stage: str,
    params: ModelParams,
    dataset: TrajectoryDataset,
    cfg: TRLFConfig,
    n_iters: int,
    rng_seed: int,
    on_iteration: Optional[IterationCallback],
) -> TrainingHistory:
    history = TrainingHistory()
    if n_iters == 0:
        return history
    optimizer = AdamW(params, cfg.lr, weight_decay=cfg.weight_decay)
    batch_rng = stream(rng_seed, stage, "batches")
    dropout_rng = stream(rng_seed, stage, "dropout")
    for it in range(n_iters):
        losses = []
        for _ in progress(range(cfg.steps_per_iter), desc=f"{stage} {it + 1}/{n_iters}", unit="step"):
            batch = sample_segments(dataset, cfg.K, cfg.batch_size, batch_rng, cfg.max_ep_len)
            with Tape() as tape:
                pred = forward(params, batch, cfg, training=True, rng=dropout_rng)
                loss = five_step_loss(pred, batch.actions, batch.mask, normalize=cfg.normalize_loss)
            optimizer.step(backward(tape, loss, params))
            losses.append(loss.item())
        history.step_losses.extend(losses)
        record = {"stage": stage, "iteration": it, "mean_loss": float(np.mean(losses)), "last_loss": losses[-1]}
        history.iterations.append(record)
        logger.info("training iteration", extra={"fields": record})
        if on_iteration is not None:
            on_iteration(it, params, record)
    return history


def pretrain(
    dataset: TrajectoryDataset,
    cfg: TRLFConfig,
    rng_seed: int,
    state_dim: int = 334,
    on_iteration: Optional[IterationCallback] = None,
) -> tuple[ModelParams, TrainingHistory]:
    """Embeddings, the first n_layers_pretrain blocks and the head, trained on mixed data."""
    if dataset.kind != "mixed":
        raise UsageError(f"pretraining expects a mixed dataset, got {dataset.kind}")
    params = init_trlf_params(cfg, stream(rng_seed, "pretrain", "init"), state_dim)
    history = _run_iterations("pretrain", params, dataset, cfg, cfg.pretrain_iters, rng_seed, on_iteration)
    return params, history


def extend_for_finetune(params: ModelParams, cfg: TRLFConfig, rng_seed: int) -> ModelParams:
    """Copy of pretrained params with fresh blocks appended and everything before them frozen."""
    n = count_blocks(params)
    if n != cfg.n_layers_pretrain:
        raise UsageError(f"expected {cfg.n_layers_pretrain} pretrained blocks, found {n}")
    out = params.copy()
    init_rng = stream(rng_seed, "finetune", "init")
    for i in range(n, cfg.n_layers_total):
        add_block(out, i, cfg.d, init_rng)
    out.set_trainable(EMBEDDINGS + block_prefixes(n), False)
    return out


def finetune(
    params: ModelParams,
    dataset: TrajectoryDataset,
    cfg: TRLFConfig,
    rng_seed: int,
    on_iteration: Optional[IterationCallback] = None,
) -> tuple[ModelParams, TrainingHistory]:
    if dataset.kind != "tract_specific":
        raise UsageError(f"fine-tuning expects a tract-specific dataset, got {dataset.kind}")
    tuned = extend_for_finetune(params, cfg, rng_seed)
    history = _run_iterations("finetune", tuned, dataset, cfg, cfg.finetune_iters, rng_seed, on_iteration)
    return tuned, history


def evaluation_windows(trajectories: Sequence[Trajectory], K: int, max_ep_len: int):
    """Consecutive non-overlapping windows covering every trajectory."""
    for t in trajectories:
        for start in range(0, len(t), K):
            yield window(t, start, K, max_ep_len)


def evaluate_loss(
    params: ModelParams,
    data: Union[TrajectoryDataset, Sequence[Trajectory]],
    cfg: TRLFConfig,
    batch_size: int = 64,
) -> float:
    """Eval-mode five-step loss per contributing term over held-out trajectories."""
    trajectories = data.trajectories if isinstance(data, TrajectoryDataset) else list(data)
    if not trajectories:
        raise UsageError("no trajectories to evaluate")
    windows = list(evaluation_windows(trajectories, cfg.K, cfg.max_ep_len))
    total, terms = 0.0, 0.0
    for i in range(0, len(windows), batch_size):
        batch = stack(windows[i : i + batch_size])
        pred = forward(params, batch, cfg, training=False)
        total += five_step_loss(pred, batch.actions, batch.mask, normalize=False).item()
        terms += float(term_weights(batch.mask).sum())
    return total / max(terms, 1.0)
