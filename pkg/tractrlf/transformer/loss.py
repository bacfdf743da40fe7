import numpy as np

from tractrlf.core.errors import UsageError
from tractrlf.diffcore import ops
from tractrlf.diffcore.tensor import Tensor

WINDOW = 2
NORM_EPS = 1e-12


def window_counts(K: int) -> np.ndarray:
    """How many five-step windows (centres 2..K-3) cover each position."""
    if K < 2 * WINDOW + 1:
        raise UsageError(f"five-step loss needs K >= {2 * WINDOW + 1}, got {K}")
    counts = np.zeros(K)
    for t in range(WINDOW, K - WINDOW):
        counts[t - WINDOW : t + WINDOW + 1] += 1
    return counts


def term_weights(mask: np.ndarray) -> np.ndarray:
    """Per-position multiplicity of (window, offset) terms; padded positions contribute nothing."""
    mask = np.asarray(mask, dtype=np.float64)
    return window_counts(mask.shape[-1]) * mask


def angular_errors(pred: Tensor, true: np.ndarray) -> Tensor:
    """Clamped angle between predicted and recorded actions, (B, K)."""
    true = np.asarray(true, dtype=np.float64)
    true_norm = np.linalg.norm(true, axis=-1)
    true_norm = np.where(true_norm > 0, true_norm, 1.0)
    pred_norm = ops.sqrt(ops.sum(pred * pred, axis=-1) + NORM_EPS)
    cos = ops.sum(pred * true, axis=-1) / (pred_norm * true_norm)
    return ops.acos_clamped(cos)


def five_step_loss(pred: Tensor, true: np.ndarray, mask: np.ndarray, normalize: bool = True) -> Tensor:
    """
    Sum over windows t in [2, K-3] of the angular error at t-2..t+2, over the batch.
    With `normalize`, divided by the number of contributing terms.

    Example:
        K=5, every vector along +x except pred[2] = +y: one window, raw loss
        4 * acos(1 - 1e-6) + pi/2.
    """
    weights = term_weights(mask)
    total = ops.sum(angular_errors(pred, true) * weights)
    if not normalize:
        return total
    return total * (1.0 / max(float(weights.sum()), 1.0))
