"""
Content digests for reproducibility metadata.
Config hashes use canonical JSON so that key order never changes a hash.
"""

import hashlib
import json
from pathlib import Path
from typing import Any

from tractrlf import __version__


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(payload: Any) -> str:
    """
    Hash a resolved configuration.

    Example:
        >>> config_hash({"b": 1, "a": 2}) == config_hash({"a": 2, "b": 1})
        True
    """
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def file_sha256(path: Path, chunk_size: int = 1 << 20) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


def code_version() -> str:
    return f"tractrlf-{__version__}"


def write_sidecar(path: Path, stage: str, cfg_hash: str, rng_seed: int, extra: dict | None = None) -> Path:
    """Write `<artifact>.meta.json` beside an artifact. Contains no timestamps."""
    path = Path(path)
    record = {
        "artifact": path.name,
        "stage": stage,
        "config_hash": cfg_hash,
        "rng_seed": rng_seed,
        "code_version": code_version(),
        "sha256": file_sha256(path),
    }
    if extra:
        record.update(extra)
    sidecar = path.with_name(path.name + ".meta.json")
    sidecar.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return sidecar


def stable_fraction(*keys: Any) -> float:
    """Deterministic value in [0, 1) from a hash of the keys."""
    digest = hashlib.blake2b(canonical_json(list(keys)).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") / 2**64
