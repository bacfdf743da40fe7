"""Aggregate the ledger and every line-delimited log in a workdir into plain tables."""

import csv
import logging
from pathlib import Path

from tractrlf.cli.common import read_jsonl
from tractrlf.core.config import PipelineSettings
from tractrlf.crud import runs as runs_crud
from tractrlf.database.db import get_session, open_ledger

logger = logging.getLogger(__name__)


def _columns(rows: list[dict]) -> list[str]:
    seen: dict[str, None] = {}
    for row in rows:
        for key in row:
            seen.setdefault(key, None)
    return list(seen)


def write_table(path: Path, rows: list[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_columns(rows))
        writer.writeheader()
        writer.writerows(rows)
    return path


def _ledger_tables(settings: PipelineSettings) -> tuple[list[dict], list[dict]]:
    sessions = get_session(open_ledger(settings.workdir))
    db = next(sessions)
    try:
        runs = [
            {
                "run": r.id,
                "stage": r.stage,
                "status": r.status.value if r.status else None,
                "exit_code": r.exit_code,
                "config_hash": r.config_hash[:12],
                "rng_seed": r.rng_seed,
            }
            for r in runs_crud.get_runs(db, limit=10_000)
        ]
        artifacts = [
            {"run": a.run_id, "kind": a.kind, "path": a.path, "sha256": a.sha256, "bytes": a.n_bytes}
            for a in runs_crud.get_artifacts(db)
        ]
    finally:
        sessions.close()
    return runs, artifacts


def run_report(settings: PipelineSettings, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    workdir = Path(settings.workdir)
    runs, artifacts = _ledger_tables(settings)
    lines = [f"runs: {len(runs)}", f"artifacts: {len(artifacts)}"]
    if runs:
        write_table(out_dir / "runs.csv", runs)
    if artifacts:
        write_table(out_dir / "artifacts.csv", artifacts)

    for log_path in sorted(workdir.rglob("*.jsonl")):
        if out_dir in log_path.parents:
            continue
        rows = read_jsonl(log_path)
        if not rows:
            continue
        name = "__".join(log_path.relative_to(workdir).with_suffix("").parts)
        write_table(out_dir / "series" / f"{name}.csv", rows)
        last = " ".join(f"{k}={v}" for k, v in rows[-1].items() if isinstance(v, (int, float)))
        lines.append(f"{name}: rows={len(rows)} last: {last}")

    report = out_dir / "report.txt"
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_text("\n".join(lines) + "\n")
    logger.info("report written", extra={"fields": {"path": str(report), "series": len(lines) - 2}})
    return report


def register(subparsers) -> None:
    p = subparsers.add_parser("report", help="Tabulate runs, artifacts, training curves and scores")
    p.add_argument("--out", type=Path, help="Report directory (default: <workdir>/report)")
    p.set_defaults(func=lambda settings, args: run_report(settings, args.out or Path(settings.workdir) / "report"))
