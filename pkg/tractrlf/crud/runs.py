from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from sqlalchemy.orm import Session

from tractrlf.core.digest import code_version, file_sha256
from tractrlf.database.models import Artifact, Run, RunStatus


def start_run(db: Session, stage: str, config_hash: str, rng_seed: int) -> Run:
    run = Run(stage=stage, config_hash=config_hash, rng_seed=rng_seed, code_version=code_version())
    db.add(run)
    db.commit()
    db.refresh(run)
    return run


def finish_run(db: Session, run: Run, exit_code: int) -> Run:
    run.exit_code = exit_code
    run.status = RunStatus.SUCCEEDED if exit_code == 0 else RunStatus.FAILED
    run.finished_at = datetime.now(timezone.utc)
    db.commit()
    db.refresh(run)
    return run


def record_artifact(db: Session, run: Run, kind: str, path: Path) -> Artifact:
    path = Path(path)
    artifact = Artifact(
        run_id=run.id, kind=kind, path=str(path), sha256=file_sha256(path), n_bytes=path.stat().st_size
    )
    db.add(artifact)
    db.commit()
    db.refresh(artifact)
    return artifact


def get_runs(db: Session, stage: Optional[str] = None, skip: int = 0, limit: int = 100):
    query = db.query(Run)
    if stage is not None:
        query = query.filter(Run.stage == stage)
    return query.order_by(Run.id).offset(skip).limit(limit).all()


def get_artifacts(db: Session, run_id: Optional[int] = None):
    query = db.query(Artifact)
    if run_id is not None:
        query = query.filter(Artifact.run_id == run_id)
    return query.order_by(Artifact.id).all()


def latest_artifact(db: Session, kind: str) -> Optional[Artifact]:
    return db.query(Artifact).filter(Artifact.kind == kind).order_by(Artifact.id.desc()).first()
