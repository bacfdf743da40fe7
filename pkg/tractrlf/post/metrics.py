import numpy as np

from tractrlf.core.errors import ShapeError, UsageError
from tractrlf.field.grid import TrackingMask, voxelize
from tractrlf.schemas.post import TractScores

__all__ = ["score", "score_tract", "voxelize"]


def score(pred: TrackingMask, gt: TrackingMask) -> TractScores:
    """
    Dice = 2|A n B| / (|A| + |B|), OvL = |A n B| / |B|, OvR = |A \\ B| / |B|.

    Example:
        |A n B| = 2, |A| = 3, |B| = 4 gives dice 4/7, ovl 0.5, ovr 0.25.
    """
    if pred.spec != gt.spec:
        raise ShapeError("predicted and ground-truth masks must share a grid")
    a, b = pred.voxels, gt.voxels
    n_b = int(b.sum())
    if n_b == 0:
        raise UsageError("ground-truth mask is empty")
    n_a = int(a.sum())
    inter = int(np.logical_and(a, b).sum())
    return TractScores(
        dice=2.0 * inter / (n_a + n_b),
        ovl=inter / n_b,
        ovr=(n_a - inter) / n_b,
        intersection=inter,
        pred_voxels=n_a,
        gt_voxels=n_b,
    )


def score_tract(tract, gt: TrackingMask) -> TractScores:
    return score(voxelize(tract, gt.spec), gt)
