"""
Synthetic phantoms with analytic ground truth: a straight bundle, a quarter-circle
arc bundle, and two straight bundles crossing at 90 degrees.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from tractrlf.core.errors import GridTooSmallError, UsageError
from tractrlf.core.rng import stream
from tractrlf.field.grid import GridSpec, SHField, TrackingMask, dilate, voxelize
from tractrlf.schemas.phantom import PhantomConfig
from tractrlf.sh import PeakVolume, sphere_basis

logger = logging.getLogger(__name__)

MIN_DIMS = 12
MAX_PEAKS = 2
_POINT_STEP_VOX = 0.5
_MARGIN_VOX = 1.0


@dataclass(frozen=True)
class Phantom:
    kind: str
    field: SHField
    gt_mask: TrackingMask
    gt_streamlines: list
    peaks_gt: PeakVolume
    aug_mask: TrackingMask

    @property
    def spec(self) -> GridSpec:
        return self.field.spec

    def path_length_steps(self, step_size_mm: float) -> float:
        return longest_path_steps(self.gt_streamlines, step_size_mm)


def longest_path_steps(streamlines, step_size_mm: float) -> float:
    """Longest ground-truth path measured in tracking steps."""
    longest = max(float(np.linalg.norm(np.diff(s, axis=0), axis=1).sum()) for s in streamlines)
    return longest / step_size_mm


def _disk_offsets(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    theta = 2.0 * math.pi * rng.random(n)
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def _straight_bundle(spec: GridSpec, axis: int, centre: tuple[float, float], rng, cfg: PhantomConfig) -> list:
    dims = spec.dims
    start, stop = _MARGIN_VOX, dims[axis] - _MARGIN_VOX
    along = np.arange(start, stop + 1e-9, _POINT_STEP_VOX)
    across = [a for a in range(3) if a != axis]
    lines = []
    for dy, dz in _disk_offsets(rng, cfg.n_streamlines, cfg.tube_radius_vox):
        pts = np.zeros((len(along), 3))
        pts[:, axis] = along
        pts[:, across[0]] = centre[0] + dy
        pts[:, across[1]] = centre[1] + dz
        lines.append(spec.voxel_to_world(pts))
    return lines


def _arc_geometry(spec: GridSpec, cfg: PhantomConfig) -> tuple[np.ndarray, float]:
    margin = 2.0
    radius = 0.6 * (min(spec.dims[0], spec.dims[1]) - margin)
    return np.array([margin, margin, spec.dims[2] / 2.0]), radius


def _arc_bundle(spec: GridSpec, rng, cfg: PhantomConfig) -> list:
    centre, radius = _arc_geometry(spec, cfg)
    lines = []
    for dr, dz in _disk_offsets(rng, cfg.n_streamlines, cfg.tube_radius_vox):
        r = radius + dr
        n = max(int(math.ceil((math.pi / 2.0) * r / _POINT_STEP_VOX)), 2)
        theta = np.linspace(0.0, math.pi / 2.0, n + 1)
        pts = np.stack(
            [centre[0] + r * np.cos(theta), centre[1] + r * np.sin(theta), np.full_like(theta, centre[2] + dz)],
            axis=1,
        )
        lines.append(spec.voxel_to_world(pts))
    return lines


def _arc_tangents(spec: GridSpec, cfg: PhantomConfig, voxels: np.ndarray) -> np.ndarray:
    centre, _ = _arc_geometry(spec, cfg)
    rel = voxels[:, :2] + 0.5 - centre[:2]
    tangent = np.stack([-rel[:, 1], rel[:, 0], np.zeros(len(rel))], axis=1)
    return tangent / np.linalg.norm(tangent, axis=1, keepdims=True)


def synthesize_coeffs(peaks: np.ndarray, counts: np.ndarray, cfg: PhantomConfig, order: int = 8) -> np.ndarray:
    """
    Fit sum_p |u . p|^k lobes to the SH basis by least squares on the sphere.
    Voxels without peaks get an isotropic background.
    """
    basis = sphere_basis(order)
    shape = counts.shape
    coeffs = np.zeros(shape + (basis.n_coeff,))
    y00 = 1.0 / (2.0 * math.sqrt(math.pi))
    coeffs[..., 0] = cfg.background_level / y00
    occupied = counts > 0
    if occupied.any():
        p = peaks[occupied]  # (N, P, 3), zero rows contribute nothing
        lobes = np.abs(np.einsum("sd,npd->nsp", basis.dirs, p)) ** cfg.lobe_sharpness
        coeffs[occupied] = basis.fit(lobes.sum(axis=2))
    return coeffs


def make_phantom(kind: str, spec: GridSpec, rng_seed: int, cfg: PhantomConfig | None = None) -> Phantom:
    cfg = cfg or PhantomConfig(kind=kind)
    if min(spec.dims) < MIN_DIMS:
        raise GridTooSmallError(f"phantom grids need at least {MIN_DIMS} voxels per axis, got {spec.dims}")
    rng = stream(rng_seed, "phantom", kind)
    shape = spec.shape
    peaks = np.zeros(shape + (MAX_PEAKS, 3))
    counts = np.zeros(shape, dtype=np.int64)

    if kind == "straight":
        bundles = [_straight_bundle(spec, 0, (shape[1] / 2.0, shape[2] / 2.0), rng, cfg)]
        mask = voxelize(bundles[0], spec)
        peaks[mask.voxels, 0] = (1.0, 0.0, 0.0)
        counts[mask.voxels] = 1
    elif kind == "arc":
        bundles = [_arc_bundle(spec, rng, cfg)]
        mask = voxelize(bundles[0], spec)
        peaks[mask.voxels, 0] = _arc_tangents(spec, cfg, np.argwhere(mask.voxels))
        counts[mask.voxels] = 1
    elif kind == "crossing":
        along_x = _straight_bundle(spec, 0, (shape[1] / 2.0, shape[2] / 2.0), rng, cfg)
        along_y = _straight_bundle(spec, 1, (shape[0] / 2.0, shape[2] / 2.0), rng, cfg)
        bundles = [along_x, along_y]
        mask_x, mask_y = voxelize(along_x, spec).voxels, voxelize(along_y, spec).voxels
        peaks[mask_x, 0] = (1.0, 0.0, 0.0)
        counts[mask_x] = 1
        only_y = mask_y & ~mask_x
        both = mask_y & mask_x
        peaks[only_y, 0] = (0.0, 1.0, 0.0)
        peaks[both, 1] = (0.0, 1.0, 0.0)
        counts[only_y] = 1
        counts[both] = 2
        mask = TrackingMask(spec, mask_x | mask_y)
    else:
        raise UsageError(f"unknown phantom kind {kind!r}; expected straight, arc or crossing")

    field = SHField(spec, synthesize_coeffs(peaks, counts, cfg))
    streamlines = [s for bundle in bundles for s in bundle]
    logger.info(
        "phantom built",
        extra={"fields": {"kind": kind, "streamlines": len(streamlines), "mask_voxels": mask.count}},
    )
    return Phantom(
        kind=kind,
        field=field,
        gt_mask=mask,
        gt_streamlines=streamlines,
        peaks_gt=PeakVolume(peaks, counts),
        aug_mask=dilate(mask, cfg.aug_dilation_mm),
    )
