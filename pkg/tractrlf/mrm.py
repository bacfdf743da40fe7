"""
Mask refinement: a voxel classifier over [shc, mask] neighbourhood features that
shrinks an augmented ROI to the voxels a tract actually occupies.
"""

import logging
from typing import Optional

import numpy as np

from tractrlf.core.digest import stable_fraction
from tractrlf.core.errors import EmptyMaskError, ShapeError
from tractrlf.core.logs import progress
from tractrlf.core.rng import stream
from tractrlf.diffcore import ops
from tractrlf.diffcore.optim import AdamW
from tractrlf.diffcore.params import ModelParams, add_linear
from tractrlf.diffcore.tensor import Tape, Tensor, backward
from tractrlf.field.grid import NeighbourhoodSampler, SHField, TrackingMask, dilate
from tractrlf.schemas.mrm import MRMConfig

logger = logging.getLogger(__name__)

INFERENCE_CHUNK = 4096


def mrm_features(field: SHField, aug_mask: TrackingMask, voxels) -> np.ndarray:
    """(N, 7 * 46) rows laid out as [v0 shc, v0 mask, ..., v6 shc, v6 mask]."""
    return NeighbourhoodSampler(field, aug_mask).features(voxels)


def init_mrm_params(cfg: MRMConfig, rng: np.random.Generator) -> ModelParams:
    params = ModelParams()
    fan_in = cfg.input_dim
    for i, width in enumerate(cfg.hidden):
        add_linear(params, f"mrm.l{i}", fan_in, width, rng)
        params.add(f"mrm.bn{i}.g", np.ones(width))
        params.add(f"mrm.bn{i}.b", np.zeros(width))
        params.add(f"mrm.bn{i}.mean", np.zeros(width), trainable=False)
        params.add(f"mrm.bn{i}.var", np.ones(width), trainable=False)
        fan_in = width
    add_linear(params, "mrm.out", fan_in, 1, rng)
    return params


def _n_hidden(params: ModelParams) -> int:
    return sum(1 for n in params if n.startswith("mrm.l") and n.endswith(".W"))


def mrm_logits(
    params: ModelParams,
    features,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    p_drop: float = 0.5,
) -> Tensor:
    x = features if isinstance(features, Tensor) else Tensor(np.asarray(features, dtype=np.float64))
    expected = params["mrm.l0.W"].shape[0]
    if x.ndim != 2 or x.shape[1] != expected:
        raise ShapeError(f"mrm features must be (N, {expected}), got {x.shape}")
    for i in range(_n_hidden(params)):
        h = ops.relu(ops.linear(x, params[f"mrm.l{i}.W"], params[f"mrm.l{i}.b"]))
        stats = ops.RunningStats(params[f"mrm.bn{i}.mean"].data, params[f"mrm.bn{i}.var"].data)
        h = ops.batchnorm_lastdim(h, params[f"mrm.bn{i}.g"], params[f"mrm.bn{i}.b"], stats, training)
        x = ops.dropout(h, p_drop, rng, training)
    return ops.linear(x, params["mrm.out.W"], params["mrm.out.b"])


def mrm_forward(params: ModelParams, features, training: bool = False, rng=None, p_drop: float = 0.5) -> Tensor:
    """Probabilities in (0, 1), shape (N, 1)."""
    return ops.sigmoid(mrm_logits(params, features, training, rng, p_drop))


def bce_loss(params: ModelParams, features, labels, training: bool, rng=None, p_drop: float = 0.5) -> Tensor:
    logits = mrm_logits(params, features, training, rng, p_drop)
    return ops.mean(ops.bce_with_logits(logits, np.asarray(labels, dtype=np.float64).reshape(-1, 1)))


def predict_probabilities(params: ModelParams, features: np.ndarray) -> np.ndarray:
    out = np.empty(len(features))
    for i in range(0, len(features), INFERENCE_CHUNK):
        out[i : i + INFERENCE_CHUNK] = mrm_forward(params, features[i : i + INFERENCE_CHUNK]).data[:, 0]
    return out


def _split(voxels: np.ndarray, dims, rng_seed: int, train_fraction: float) -> np.ndarray:
    flat = voxels[:, 0] + dims[0] * (voxels[:, 1] + dims[1] * voxels[:, 2])
    return np.array([stable_fraction(rng_seed, "mrm-split", int(f)) < train_fraction for f in flat], dtype=bool)


def _accuracy(params: ModelParams, features: np.ndarray, labels: np.ndarray) -> Optional[float]:
    if len(labels) == 0:
        return None
    return float(np.mean((predict_probabilities(params, features) > 0.5) == labels.astype(bool)))


def train_mrm(
    field: SHField,
    aug_mask: TrackingMask,
    gt_mask: TrackingMask,
    cfg: MRMConfig,
    rng_seed: int,
) -> tuple[ModelParams, list[dict]]:
    """Voxel-wise BCE training over aug_mask with labels from gt_mask; 80/20 split by voxel hash."""
    gt_mask.check_companion(field)
    voxels = aug_mask.indices()
    features = mrm_features(field, aug_mask, voxels)
    labels = gt_mask.voxels[voxels[:, 0], voxels[:, 1], voxels[:, 2]].astype(np.float64)
    if labels.min(initial=1.0) == labels.max(initial=0.0):
        logger.warning("degenerate mrm labels", extra={"fields": {"value": labels[:1].tolist(), "voxels": len(labels)}})

    is_train = _split(voxels, aug_mask.spec.dims, rng_seed, cfg.train_fraction)
    x_train, y_train = features[is_train], labels[is_train]
    x_val, y_val = features[~is_train], labels[~is_train]

    params = init_mrm_params(cfg, stream(rng_seed, "mrm", "init"))
    optimizer = AdamW(params, cfg.lr, weight_decay=cfg.weight_decay)
    dropout_rng = stream(rng_seed, "mrm", "dropout")
    log: list[dict] = []
    if len(y_train) < 2:
        logger.warning("too few mrm training voxels", extra={"fields": {"train": len(y_train)}})
        return params, log

    for epoch in progress(range(cfg.epochs), desc="mrm", unit="epoch"):
        order = stream(rng_seed, "mrm", "epoch", epoch).permutation(len(y_train))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if len(idx) < 2:
                continue
            with Tape() as tape:
                loss = bce_loss(params, x_train[idx], y_train[idx], True, dropout_rng, cfg.dropout)
            optimizer.step(backward(tape, loss, params))
            losses.append(loss.item())
        record = {
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "train_acc": _accuracy(params, x_train, y_train),
            "val_acc": _accuracy(params, x_val, y_val),
        }
        log.append(record)
        logger.debug("mrm epoch", extra={"fields": record})
    if log:
        logger.info("mrm trained", extra={"fields": log[-1]})
    return params, log


def refine_mask(
    params: ModelParams,
    field: SHField,
    aug_mask: TrackingMask,
    cfg: MRMConfig,
    threshold: Optional[float] = None,
) -> TrackingMask:
    """Keep aug_mask voxels with probability strictly above threshold, then dilate."""
    threshold = cfg.threshold if threshold is None else threshold
    voxels = aug_mask.indices()
    probs = predict_probabilities(params, mrm_features(field, aug_mask, voxels))
    keep = voxels[probs > threshold]
    if len(keep) == 0:
        raise EmptyMaskError("refined mask is empty; tracking is impossible")
    kept = np.zeros(aug_mask.spec.shape, dtype=bool)
    kept[keep[:, 0], keep[:, 1], keep[:, 2]] = True
    logger.info("mask refined", extra={"fields": {"candidates": len(voxels), "kept": len(keep)}})
    return dilate(TrackingMask(aug_mask.spec, kept), cfg.final_dilation_mm)
