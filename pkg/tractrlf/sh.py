"""
Real symmetric spherical harmonics, fODF amplitudes and peak extraction.

The basis is dipy's non-legacy descoteaux07 basis: even l <= order, m = -l..l in
lexicographic (l, m) order, orthonormal over the sphere.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from dipy.core.geometry import cart2sphere
from dipy.core.sphere import HemiSphere, Sphere
from dipy.direction.peaks import peak_directions
from dipy.reconst.recspeed import remove_similar_vertices
from dipy.reconst.shm import real_sh_descoteaux_from_index, sph_harm_ind_list

from tractrlf.core.errors import UsageError
from tractrlf.field.grid import SHField, TrackingMask, n_coeff_for_order, order_for_n_coeff
from tractrlf.schemas.sh import PeakConfig

logger = logging.getLogger(__name__)

SPHERE_SIZE = 724
_REFINE_STEPS_DEG = (4.0, 2.0, 1.0, 0.5, 0.25)


def sh_indices(order: int) -> list[tuple[int, int]]:
    n_coeff_for_order(order)
    m_values, l_values = sph_harm_ind_list(order)
    return [(int(l), int(m)) for m, l in zip(m_values, l_values)]


def eval_basis_matrix(order: int, dirs) -> np.ndarray:
    """Basis values for a batch of unit directions: (N, 3) -> (N, n_coeff)."""
    if order % 2:
        raise UsageError(f"odd SH order {order} rejected; only symmetric bases are supported")
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    m_values, l_values = sph_harm_ind_list(order)
    _, theta, phi = cart2sphere(dirs[:, 0], dirs[:, 1], dirs[:, 2])
    return real_sh_descoteaux_from_index(m_values, l_values, theta[:, None], phi[:, None], legacy=False)


def eval_basis(order: int, u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if abs(np.linalg.norm(u) - 1.0) > 1e-6:
        raise UsageError("basis direction must be unit length")
    return eval_basis_matrix(order, u[None, :])[0]


def _fibonacci_hemisphere(n: int) -> np.ndarray:
    golden = math.pi * (3.0 - math.sqrt(5.0))
    i = np.arange(n)
    z = (i + 0.5) / n
    r = np.sqrt(1.0 - z * z)
    phi = i * golden
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


@lru_cache(maxsize=None)
def default_sphere() -> Sphere:
    """724 directions: a 362-point Fibonacci hemisphere followed by its antipodes."""
    return HemiSphere(xyz=_fibonacci_hemisphere(SPHERE_SIZE // 2)).mirror()


@dataclass(frozen=True)
class SHBasis:
    order: int
    dirs: np.ndarray
    B: np.ndarray
    pinv: np.ndarray = field(repr=False)

    @property
    def n_coeff(self) -> int:
        return self.B.shape[1]

    def fit(self, amplitudes) -> np.ndarray:
        """Least-squares SH coefficients of amplitudes sampled on `dirs`."""
        return np.asarray(amplitudes) @ self.pinv.T

    def amplitudes(self, coeffs) -> np.ndarray:
        return np.asarray(coeffs) @ self.B.T


@lru_cache(maxsize=None)
def sphere_basis(order: int = 8) -> SHBasis:
    dirs = default_sphere().vertices
    B = eval_basis_matrix(order, dirs)
    pinv = np.linalg.pinv(B)
    for arr in (B, pinv):
        arr.setflags(write=False)
    return SHBasis(order, dirs, B, pinv)


def fodf_amplitude(coeffs, u) -> float:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    order = order_for_n_coeff(coeffs.shape[-1])
    return float(coeffs @ eval_basis(order, u))


@dataclass(frozen=True)
class PeakSet:
    peaks: np.ndarray  # (n, 3), descending amplitude
    amplitudes: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.amplitudes)


def canonical_sign(u: np.ndarray) -> np.ndarray:
    """Flip a direction so that its first non-zero of (z, y, x) is positive."""
    for axis in (2, 1, 0):
        if abs(u[axis]) > 1e-12:
            return u if u[axis] > 0 else -u
    return u


def _tangent_frame(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(u[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(u, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(u, e1)


def _refine_peak(coeffs: np.ndarray, order: int, u: np.ndarray, amp: float) -> tuple[np.ndarray, float]:
    # comparison-only hill climb keeps results invariant to positive scaling
    angles = np.linspace(0.0, 2.0 * math.pi, 8, endpoint=False)
    for step_deg in _REFINE_STEPS_DEG:
        step = math.radians(step_deg)
        improved = True
        while improved:
            e1, e2 = _tangent_frame(u)
            offsets = np.cos(angles)[:, None] * e1 + np.sin(angles)[:, None] * e2
            cand = math.cos(step) * u + math.sin(step) * offsets
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
            cand_amp = eval_basis_matrix(order, cand) @ coeffs
            best = int(np.argmax(cand_amp))
            improved = cand_amp[best] > amp
            if improved:
                u, amp = cand[best], float(cand_amp[best])
    return u, amp


def extract_peaks(
    coeffs,
    sphere: Sphere | None = None,
    rel_threshold: float = 0.25,
    min_sep_deg: float = 25.0,
    n_max: int = 3,
    refine: bool = True,
) -> PeakSet:
    """
    Local maxima of the fODF over the sphere's edge graph, thresholded relative
    to the global maximum and separated axially by at least `min_sep_deg`.
    """
    sphere = sphere or default_sphere()
    coeffs = np.asarray(coeffs, dtype=np.float64)
    order = order_for_n_coeff(coeffs.shape[-1])
    B = sphere_basis(order).B if sphere is default_sphere() else eval_basis_matrix(order, sphere.vertices)
    amp = B @ coeffs
    empty = PeakSet(np.zeros((0, 3)), np.zeros(0))
    top = float(amp.max())
    # a flat field has no strict maxima, only evaluation noise
    if top <= 0 or top - float(amp.min()) <= 1e-9 * top:
        return empty
    directions, values, _ = peak_directions(
        amp, sphere, relative_peak_threshold=rel_threshold, min_separation_angle=min_sep_deg, minmax_norm=False
    )
    keep = values > 0
    directions, values = directions[keep], values[keep]
    if len(values) == 0:
        return empty
    if refine:
        refined = [_refine_peak(coeffs, order, u, float(a)) for u, a in zip(directions, values)]
        directions = np.array([u for u, _ in refined])
        values = np.array([a for _, a in refined])
        ranked = np.argsort(-values, kind="stable")
        directions, values = separate(directions[ranked], values[ranked], min_sep_deg)
    directions = np.array([canonical_sign(u) for u in directions[:n_max]])
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return PeakSet(directions, values[:n_max])


def separate(directions: np.ndarray, values: np.ndarray, min_sep_deg: float) -> tuple[np.ndarray, np.ndarray]:
    """Drop directions closer than `min_sep_deg` (axially) to a stronger one kept earlier."""
    unique, index = remove_similar_vertices(np.ascontiguousarray(directions), min_sep_deg, return_index=True)
    return unique, values[index]


@dataclass(frozen=True)
class PeakVolume:
    """Per-voxel peak sets, zero-padded to `n_max` directions."""

    peaks: np.ndarray  # (X, Y, Z, n_max, 3)
    counts: np.ndarray  # (X, Y, Z)

    def at(self, ijk) -> np.ndarray:
        i, j, k = (int(v) for v in ijk)
        n = int(self.counts[i, j, k])
        return self.peaks[i, j, k, :n]

    @classmethod
    def from_lists(cls, shape, n_max: int, items) -> "PeakVolume":
        peaks = np.zeros(tuple(shape) + (n_max, 3))
        counts = np.zeros(tuple(shape), dtype=np.int64)
        for ijk, dirs in items:
            dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)[:n_max]
            peaks[tuple(ijk)][: len(dirs)] = dirs
            counts[tuple(ijk)] = len(dirs)
        return cls(peaks, counts)


def peak_volume(field: SHField, mask: TrackingMask, cfg: PeakConfig | None = None) -> PeakVolume:
    """Extract peaks for every voxel set in `mask`."""
    cfg = cfg or PeakConfig(order=field.order)
    items = []
    empty_voxels = 0
    for ijk in mask.indices():
        ps = extract_peaks(
            field.coeffs[tuple(ijk)],
            rel_threshold=cfg.rel_threshold,
            min_sep_deg=cfg.min_sep_deg,
            n_max=cfg.n_max,
        )
        if len(ps) == 0:
            empty_voxels += 1
        items.append((ijk, ps.peaks))
    if empty_voxels:
        logger.warning("voxels without peaks inside tracking mask", extra={"fields": {"count": empty_voxels}})
    return PeakVolume.from_lists(field.spec.shape, cfg.n_max, items)
