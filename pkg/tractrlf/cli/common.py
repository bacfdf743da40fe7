"""Shared plumbing for CLI stages: run ledger, sidecars, artifact paths."""

import json
import logging
from pathlib import Path
from typing import Iterable, Optional

from tractrlf.core.config import PipelineSettings
from tractrlf.core.digest import write_sidecar
from tractrlf.core.errors import MissingArtifactError, TRLFError
from tractrlf.crud import runs as runs_crud
from tractrlf.database.db import get_session, open_ledger
from tractrlf.env import TrackingSpace
from tractrlf.field import io as field_io
from tractrlf.sh import peak_volume

logger = logging.getLogger(__name__)

FIELD = "field.shf"
GT_MASK = "gt_mask.msk"
AUG_MASK = "aug_mask.msk"
GT_TRACT = "gt.trk"
MRM_CKPT = "mrm.ckp"
TRACKING_MASK = "tracking_mask.msk"
RESOLVED_CONFIG = "resolved_config.json"


def require(path: Path, stage: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(stage, path)
    return path


def write_jsonl(path: Path, records: Iterable[dict]) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return path


def read_jsonl(path: Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_resolved_config(directory: Path, settings: PipelineSettings) -> Path:
    path = Path(directory) / RESOLVED_CONFIG
    path.write_text(json.dumps(settings.resolved(), indent=2, sort_keys=True) + "\n")
    return path


class StageRun:
    """
    Ledger bookkeeping for one stage: a Run row on entry, artifacts with
    sidecars as they are produced, and the exit code on exit.
    """

    def __init__(self, settings: PipelineSettings, stage: str):
        self.settings = settings
        self.stage = stage
        self._sessions = None
        self.db = None
        self.run = None
        self.artifacts: list[Path] = []

    def __enter__(self) -> "StageRun":
        self._sessions = get_session(open_ledger(self.settings.workdir))
        self.db = next(self._sessions)
        self.run = runs_crud.start_run(self.db, self.stage, self.settings.config_hash, self.settings.rng_seed)
        logger.info("stage started", extra={"fields": {"stage": self.stage, "run": self.run.id}})
        return self

    def artifact(self, kind: str, path: Path, extra: Optional[dict] = None) -> Path:
        path = Path(path)
        write_sidecar(path, self.stage, self.settings.config_hash, self.settings.rng_seed, extra)
        write_resolved_config(path.parent, self.settings)
        runs_crud.record_artifact(self.db, self.run, kind, path)
        self.artifacts.append(path)
        return path

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc is None:
            code = 0
        elif isinstance(exc, TRLFError):
            code = exc.exit_code
        else:
            code = 1
        runs_crud.finish_run(self.db, self.run, code)
        logger.info(
            "stage finished",
            extra={"fields": {"stage": self.stage, "exit_code": code, "artifacts": len(self.artifacts)}},
        )
        self._sessions.close()


def load_tracking_space(phantom_dir: Path, settings: PipelineSettings, stage: str, mask_name: str = TRACKING_MASK):
    """Field, tracking mask and their peak volume for a phantom directory."""
    phantom_dir = Path(phantom_dir)
    field = field_io.read_field(require(phantom_dir / FIELD, stage))
    mask = field_io.read_mask(require(phantom_dir / mask_name, stage))
    peaks_cfg = settings.peaks.model_copy(update={"order": field.order})
    return TrackingSpace(field, mask, peak_volume(field, mask, peaks_cfg))
