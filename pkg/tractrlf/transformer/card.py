from pathlib import Path
from typing import Optional

from tractrlf.core.digest import canonical_json, code_version
from tractrlf.diffcore.params import ModelParams
from tractrlf.schemas.traj import SelectionManifest
from tractrlf.schemas.trlf import TRLFConfig


def card_path(checkpoint: Path) -> Path:
    checkpoint = Path(checkpoint)
    return checkpoint.with_name(checkpoint.name + ".card.txt")


def write_model_card(
    checkpoint: Path,
    stage: str,
    cfg: TRLFConfig,
    params: ModelParams,
    rng_seed: int,
    manifests: Optional[dict[str, SelectionManifest]] = None,
    metrics: Optional[dict] = None,
) -> Path:
    lines = [
        f"model: {Path(checkpoint).name}",
        f"stage: {stage}",
        f"code_version: {code_version()}",
        f"rng_seed: {rng_seed}",
        f"parameters: {params.n_params()}",
        f"trainable: {sum(params[n].data.size for n in params.trainable_names())}",
        f"config: {canonical_json(cfg.model_dump())}",
    ]
    for name, manifest in (manifests or {}).items():
        lines.append(f"dataset[{name}]: {canonical_json(manifest.model_dump())}")
    for key, value in (metrics or {}).items():
        lines.append(f"metric.{key}: {value}")
    path = card_path(checkpoint)
    path.write_text("\n".join(lines) + "\n")
    return path
