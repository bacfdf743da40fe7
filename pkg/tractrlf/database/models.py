import enum
from datetime import datetime, timezone

from sqlalchemy import Column, DateTime, Enum, ForeignKey, Integer, String
from sqlalchemy.orm import relationship

from .db import Base


class RunStatus(str, enum.Enum):
    RUNNING = "RUNNING"
    SUCCEEDED = "SUCCEEDED"
    FAILED = "FAILED"


class Run(Base):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    stage = Column(String, index=True, nullable=False)
    config_hash = Column(String(64), nullable=False)
    rng_seed = Column(Integer, nullable=False)
    code_version = Column(String, nullable=False)
    status = Column(Enum(RunStatus), default=RunStatus.RUNNING)
    exit_code = Column(Integer, nullable=True)
    started_at = Column(DateTime(timezone=True), default=lambda: datetime.now(timezone.utc))
    finished_at = Column(DateTime(timezone=True), nullable=True)

    artifacts = relationship("Artifact", back_populates="run", cascade="all, delete-orphan")


class Artifact(Base):
    __tablename__ = "artifacts"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("runs.id"))
    kind = Column(String, index=True, nullable=False)
    path = Column(String, nullable=False)
    sha256 = Column(String(64), nullable=False)
    n_bytes = Column(Integer, nullable=False)

    run = relationship("Run", back_populates="artifacts")
