"""
Radius-search cleaning: a streamline survives when its minimum-average-direct-flip
distance to some reference fiber is within the search radius.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from dipy.tracking.distances import bundles_distances_mdf
from dipy.tracking.streamline import set_number_of_points

from tractrlf.core.errors import ShapeError, UsageError
from tractrlf.schemas.post import CleanConfig

logger = logging.getLogger(__name__)


def resample_streamline(streamline, n: int) -> np.ndarray:
    """Arc-length-uniform resampling to n points; endpoints kept exactly."""
    s = np.ascontiguousarray(streamline, dtype=np.float64).reshape(-1, 3)
    if len(s) < 2:
        raise UsageError("cannot resample a streamline with fewer than 2 points")
    if n < 2:
        raise UsageError("resampling needs at least 2 points")
    out = np.asarray(set_number_of_points(s, n), dtype=np.float64)
    out[0], out[-1] = s[0], s[-1]
    return out


def mdf_distance(a, b) -> float:
    """min(mean |a_i - b_i|, mean |a_i - b_(n-1-i)|) for equally sampled streamlines."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"streamlines must have equal point counts, got {len(a)} and {len(b)}")
    direct = np.linalg.norm(a - b, axis=1).mean()
    flipped = np.linalg.norm(a - b[::-1], axis=1).mean()
    return float(min(direct, flipped))


@dataclass(frozen=True)
class CleaningResult:
    kept: list[np.ndarray]
    kept_indices: list[int]
    nearest_mm: np.ndarray

    def report(self) -> list[dict]:
        kept = set(self.kept_indices)
        return [
            {"index": i, "nearest_mm": float(d), "kept": i in kept} for i, d in enumerate(self.nearest_mm)
        ]

    @property
    def rejected(self) -> int:
        return len(self.nearest_mm) - len(self.kept_indices)


def _resampled(streamlines: Sequence, n: int) -> list[np.ndarray]:
    return [resample_streamline(s, n) for s in streamlines]


def clean(tract: Sequence, references: Sequence, cfg: CleanConfig) -> CleaningResult:
    if not references:
        raise UsageError("cleaning needs at least one reference streamline")
    candidates = [i for i, s in enumerate(tract) if len(s) >= 2]
    nearest = np.full(len(tract), np.inf)
    if candidates:
        refs = _resampled(references, cfg.resample_points)
        ours = _resampled([tract[i] for i in candidates], cfg.resample_points)
        distances = np.asarray(bundles_distances_mdf(ours, refs), dtype=np.float64)
        nearest[candidates] = distances.min(axis=1)
    keep = [i for i in range(len(tract)) if nearest[i] <= cfg.radius_mm]
    logger.info(
        "tract cleaned",
        extra={"fields": {"streamlines": len(tract), "kept": len(keep), "radius_mm": cfg.radius_mm}},
    )
    return CleaningResult([np.asarray(tract[i]) for i in keep], keep, nearest)
