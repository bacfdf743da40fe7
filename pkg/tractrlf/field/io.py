"""
TRLF-SHF / TRLF-MSK / TRLF-TRK binary formats (little-endian).

Voxel data are stored x-fastest; SH coefficients of one voxel are contiguous.
"""

from pathlib import Path

import numpy as np

from tractrlf.core.binio import pack, read_exact, read_magic, unpack, write_magic
from tractrlf.core.errors import FormatError
from tractrlf.field.grid import GridSpec, SHField, TrackingMask

FIELD_MAGIC = b"TRLF-SHF"
MASK_MAGIC = b"TRLF-MSK"
TRACT_MAGIC = b"TRLF-TRK"
VERSION = 1


def _write_grid(fh, magic: bytes, spec: GridSpec) -> None:
    write_magic(fh, magic)
    pack(fh, "I", VERSION)
    pack(fh, "3I", *spec.dims)
    pack(fh, "3f", *spec.spacing_mm)
    pack(fh, "3f", *spec.origin_mm)


def _read_grid(fh, magic: bytes) -> GridSpec:
    read_magic(fh, magic)
    (version,) = unpack(fh, "I")
    if version != VERSION:
        raise FormatError(f"unsupported {magic.decode()} version {version}")
    dims = unpack(fh, "3I")
    spacing = unpack(fh, "3f")
    origin = unpack(fh, "3f")
    return GridSpec(dims=dims, spacing_mm=spacing, origin_mm=origin)


def _x_fastest(volume: np.ndarray) -> np.ndarray:
    # (X, Y, Z, ...) -> (Z, Y, X, ...)
    return np.ascontiguousarray(np.swapaxes(volume, 0, 2))


def write_field(path: Path, field: SHField) -> None:
    with open(path, "wb") as fh:
        _write_grid(fh, FIELD_MAGIC, field.spec)
        pack(fh, "I", field.n_coeff)
        fh.write(_x_fastest(field.coeffs).astype("<f4").tobytes())


def read_field(path: Path) -> SHField:
    with open(path, "rb") as fh:
        spec = _read_grid(fh, FIELD_MAGIC)
        (n_coeff,) = unpack(fh, "I")
        x, y, z = spec.dims
        raw = read_exact(fh, 4 * x * y * z * n_coeff)
    data = np.frombuffer(raw, dtype="<f4").reshape(z, y, x, n_coeff)
    return SHField(spec, np.swapaxes(data, 0, 2).astype(np.float64))


def write_mask(path: Path, mask: TrackingMask) -> None:
    with open(path, "wb") as fh:
        _write_grid(fh, MASK_MAGIC, mask.spec)
        fh.write(_x_fastest(mask.voxels).astype(np.uint8).tobytes())


def read_mask(path: Path) -> TrackingMask:
    with open(path, "rb") as fh:
        spec = _read_grid(fh, MASK_MAGIC)
        x, y, z = spec.dims
        raw = read_exact(fh, x * y * z)
    data = np.frombuffer(raw, dtype=np.uint8).reshape(z, y, x)
    return TrackingMask(spec, np.swapaxes(data, 0, 2) != 0)


def write_streamlines(path: Path, streamlines) -> None:
    with open(path, "wb") as fh:
        write_magic(fh, TRACT_MAGIC)
        pack(fh, "I", len(streamlines))
        for s in streamlines:
            pts = np.asarray(s, dtype="<f4").reshape(-1, 3)
            pack(fh, "I", len(pts))
            fh.write(pts.tobytes())


def read_streamlines(path: Path) -> list[np.ndarray]:
    out = []
    with open(path, "rb") as fh:
        read_magic(fh, TRACT_MAGIC)
        (count,) = unpack(fh, "I")
        for _ in range(count):
            (n,) = unpack(fh, "I")
            pts = np.frombuffer(read_exact(fh, 12 * n), dtype="<f4").reshape(n, 3)
            out.append(pts.astype(np.float64))
    return out
