"""
TRLF-TRJ trajectory files, little-endian f64 payload.
The selection manifest lives beside the file as `<file>.manifest.json`.
"""

import json
from pathlib import Path

import numpy as np

from tractrlf.core.binio import pack, read_exact, read_magic, unpack, write_magic
from tractrlf.core.errors import FormatError, MissingArtifactError
from tractrlf.schemas.traj import SelectionManifest
from tractrlf.traj.dataset import Trajectory, TrajectoryDataset

TRAJ_MAGIC = b"TRLF-TRJ"
VERSION = 1
STATE_DIM = 334


def manifest_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def write_trajectories(path: Path, dataset: TrajectoryDataset) -> None:
    with open(path, "wb") as fh:
        write_magic(fh, TRAJ_MAGIC)
        pack(fh, "I", VERSION)
        pack(fh, "I", len(dataset))
        for t in dataset.trajectories:
            if t.states.shape[1] != STATE_DIM:
                raise FormatError(f"TRLF-TRJ stores {STATE_DIM}-wide states, got {t.states.shape[1]}")
            pack(fh, "II", len(t), t.tract_id)
            rows = np.concatenate([t.rtg[:, None], t.states, t.actions], axis=1)
            fh.write(rows.astype("<f8").tobytes())
    manifest_path(path).write_text(dataset.manifest.model_dump_json(indent=2) + "\n")


def read_trajectories(path: Path) -> TrajectoryDataset:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError("trajectories", path)
    width = 1 + STATE_DIM + 3
    trajectories = []
    with open(path, "rb") as fh:
        read_magic(fh, TRAJ_MAGIC)
        (version,) = unpack(fh, "I")
        if version != VERSION:
            raise FormatError(f"unsupported TRLF-TRJ version {version}")
        (count,) = unpack(fh, "I")
        for _ in range(count):
            n, tract_id = unpack(fh, "II")
            rows = np.frombuffer(read_exact(fh, 8 * n * width), dtype="<f8").reshape(n, width)
            trajectories.append(
                Trajectory(rows[:, 0].copy(), rows[:, 1 : 1 + STATE_DIM].copy(), rows[:, 1 + STATE_DIM :].copy(), tract_id)
            )
    sidecar = manifest_path(path)
    if not sidecar.exists():
        raise MissingArtifactError("trajectory manifest", sidecar)
    manifest = SelectionManifest.model_validate(json.loads(sidecar.read_text()))
    return TrajectoryDataset(trajectories, manifest)
