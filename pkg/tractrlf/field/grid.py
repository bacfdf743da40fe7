"""
Voxel-grid containers and coordinate handling.

Voxel (i, j, k) spans [origin + i*spacing, origin + (i+1)*spacing) along each
axis, so its centre sits at origin + (i + 0.5) * spacing. A point belongs to
the voxel obtained by flooring its continuous voxel coordinates.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy import ndimage

from tractrlf.core.errors import ShapeError, UsageError

# current voxel, then the six face neighbours
NEIGHBOUR_OFFSETS = np.array(
    [(0, 0, 0), (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)],
    dtype=np.int64,
)
NEIGHBOUR_COUNT = len(NEIGHBOUR_OFFSETS)


def n_coeff_for_order(order: int) -> int:
    if order < 0 or order % 2:
        raise UsageError(f"SH order must be a non-negative even integer, got {order}")
    return (order // 2 + 1) * (order + 1)


def order_for_n_coeff(n_coeff: int) -> int:
    for order in range(0, 40, 2):
        if n_coeff_for_order(order) == n_coeff:
            return order
    raise ShapeError(f"{n_coeff} is not a symmetric SH coefficient count")


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    dims: tuple[int, int, int]
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @field_validator("dims")
    @classmethod
    def validate_dims(cls, v):
        if any(d < 1 for d in v):
            raise ValueError("all dims must be >= 1")
        return v

    @field_validator("spacing_mm")
    @classmethod
    def validate_spacing(cls, v):
        if any(s <= 0 for s in v):
            raise ValueError("all spacings must be > 0")
        return v

    @classmethod
    def cube(cls, n: int, spacing: float = 1.0) -> "GridSpec":
        return cls(dims=(n, n, n), spacing_mm=(spacing,) * 3)

    @property
    def spacing(self) -> np.ndarray:
        return np.asarray(self.spacing_mm, dtype=np.float64)

    @property
    def origin(self) -> np.ndarray:
        return np.asarray(self.origin_mm, dtype=np.float64)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.dims)

    def world_to_voxel(self, p_mm) -> np.ndarray:
        return (np.asarray(p_mm, dtype=np.float64) - self.origin) / self.spacing

    def voxel_to_world(self, c) -> np.ndarray:
        return self.origin + np.asarray(c, dtype=np.float64) * self.spacing

    def voxel_center(self, ijk) -> np.ndarray:
        return self.voxel_to_world(np.asarray(ijk, dtype=np.float64) + 0.5)

    def containing_voxel(self, p_mm) -> np.ndarray:
        return np.floor(self.world_to_voxel(p_mm)).astype(np.int64)

    def in_grid(self, ijk) -> np.ndarray:
        ijk = np.asarray(ijk)
        return np.all((ijk >= 0) & (ijk < np.asarray(self.dims)), axis=-1)


def world_to_voxel(spec: GridSpec, p_mm) -> np.ndarray:
    return spec.world_to_voxel(p_mm)


@dataclass(frozen=True)
class SHField:
    spec: GridSpec
    coeffs: np.ndarray  # (X, Y, Z, n_coeff)

    def __post_init__(self):
        coeffs = np.ascontiguousarray(self.coeffs, dtype=np.float64)
        if coeffs.ndim != 4 or coeffs.shape[:3] != self.spec.shape:
            raise ShapeError(f"coefficients of shape {coeffs.shape} do not match grid {self.spec.shape}")
        order_for_n_coeff(coeffs.shape[3])
        if not np.all(np.isfinite(coeffs)):
            raise UsageError("SH field contains non-finite coefficients")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n_coeff(self) -> int:
        return self.coeffs.shape[3]

    @property
    def order(self) -> int:
        return order_for_n_coeff(self.n_coeff)


@dataclass(frozen=True)
class TrackingMask:
    spec: GridSpec
    voxels: np.ndarray  # (X, Y, Z) bool

    def __post_init__(self):
        voxels = np.ascontiguousarray(self.voxels, dtype=bool)
        if voxels.shape != self.spec.shape:
            raise ShapeError(f"mask of shape {voxels.shape} does not match grid {self.spec.shape}")
        voxels.setflags(write=False)
        object.__setattr__(self, "voxels", voxels)

    @property
    def count(self) -> int:
        return int(self.voxels.sum())

    def indices(self) -> np.ndarray:
        """Set voxels as (N, 3) indices in x-fastest order."""
        ijk = np.argwhere(self.voxels.transpose(2, 1, 0))[:, ::-1]
        return np.ascontiguousarray(ijk)

    def contains_voxel(self, ijk) -> bool:
        ijk = np.asarray(ijk)
        if not self.spec.in_grid(ijk):
            return False
        return bool(self.voxels[tuple(ijk)])

    def contains_point(self, p_mm) -> bool:
        return self.contains_voxel(self.spec.containing_voxel(p_mm))

    def check_companion(self, field: SHField) -> None:
        if self.spec != field.spec:
            raise ShapeError("mask grid does not match field grid")


class NeighbourhoodSampler:
    """
    Gathers `[shc, mask]` blocks for a voxel and its six face neighbours.

    Shared by the tracking state and the mask-refinement features so both use
    the same ordering. Out-of-grid neighbours contribute all-zero blocks.
    """

    def __init__(self, field: SHField, mask: TrackingMask):
        mask.check_companion(field)
        self.spec = field.spec
        self.block_width = field.n_coeff + 1
        self._volume = np.concatenate([field.coeffs, mask.voxels[..., None].astype(np.float64)], axis=-1)
        self._dims = np.asarray(self.spec.dims)

    def blocks(self, voxels) -> np.ndarray:
        voxels = np.atleast_2d(np.asarray(voxels, dtype=np.int64))
        idx = voxels[:, None, :] + NEIGHBOUR_OFFSETS[None, :, :]
        valid = np.all((idx >= 0) & (idx < self._dims), axis=-1)
        clipped = np.clip(idx, 0, self._dims - 1)
        out = self._volume[clipped[..., 0], clipped[..., 1], clipped[..., 2]]
        out[~valid] = 0.0
        return out  # (N, 7, n_coeff + 1)

    def features(self, voxels) -> np.ndarray:
        blocks = self.blocks(voxels)
        return blocks.reshape(blocks.shape[0], -1)


def interp_shc(field: SHField, p_mm) -> np.ndarray:
    """
    Trilinear interpolation between voxel centres, clamping to the border voxel.
    Accepts a single point (3,) or a batch (N, 3).
    """
    points = np.asarray(p_mm, dtype=np.float64)
    single = points.ndim == 1
    points = np.atleast_2d(points)
    c = np.clip(field.spec.world_to_voxel(points) - 0.5, 0.0, np.asarray(field.spec.dims) - 1).T
    out = np.stack(
        [ndimage.map_coordinates(field.coeffs[..., k], c, order=1, mode="nearest") for k in range(field.n_coeff)],
        axis=1,
    )
    return out[0] if single else out


def ball(radius_vox: int) -> np.ndarray:
    r = int(radius_vox)
    grid = np.mgrid[-r : r + 1, -r : r + 1, -r : r + 1]
    return (grid**2).sum(axis=0) <= r * r


def dilate(mask: TrackingMask, radius_mm: float) -> TrackingMask:
    """Dilate by a discrete Euclidean ball of ceil(radius_mm / min(spacing)) voxels."""
    if radius_mm < 0:
        raise UsageError("dilation radius must be >= 0")
    radius_vox = math.ceil(radius_mm / float(min(mask.spec.spacing_mm)))
    if radius_vox == 0:
        return TrackingMask(mask.spec, mask.voxels.copy())
    grown = ndimage.binary_dilation(mask.voxels, structure=ball(radius_vox))
    return TrackingMask(mask.spec, grown | mask.voxels)


def voxelize(tract: Sequence[np.ndarray], spec: GridSpec, substep_vox: float = 0.25) -> TrackingMask:
    """
    Mark every voxel holding a streamline point, walking each segment at
    quarter-voxel steps so no traversed voxel is skipped.
    """
    voxels = np.zeros(spec.shape, dtype=bool)
    for streamline in tract:
        pts = spec.world_to_voxel(np.asarray(streamline, dtype=np.float64).reshape(-1, 3))
        if len(pts) == 0:
            continue
        samples = [pts]
        if len(pts) > 1:
            seg = np.diff(pts, axis=0)
            n_sub = np.maximum(np.ceil(np.linalg.norm(seg, axis=1) / substep_vox).astype(np.int64), 1)
            for start, delta, n in zip(pts[:-1], seg, n_sub):
                frac = np.arange(1, n)[:, None] / n
                samples.append(start + frac * delta)
        ijk = np.floor(np.concatenate(samples)).astype(np.int64)
        ijk = ijk[spec.in_grid(ijk)]
        voxels[ijk[:, 0], ijk[:, 1], ijk[:, 2]] = True
    return TrackingMask(spec, voxels)
