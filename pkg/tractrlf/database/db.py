from pathlib import Path

from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

LEDGER_NAME = "ledger.db"

Base = declarative_base()


def ledger_url(workdir) -> str:
    return f"sqlite:///{Path(workdir) / LEDGER_NAME}"


def open_ledger(workdir) -> sessionmaker:
    """Create (if needed) the SQLite ledger in workdir and return a session factory."""
    from tractrlf.database import models  # noqa: F401  registers the tables

    Path(workdir).mkdir(parents=True, exist_ok=True)
    engine = create_engine(ledger_url(workdir))
    Base.metadata.create_all(bind=engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)


def get_session(session_factory: sessionmaker):
    db = session_factory()
    try:
        yield db
    finally:
        db.close()
