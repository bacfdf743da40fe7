import argparse
import logging
from pathlib import Path

import numpy as np

from tractrlf.cli.common import AUG_MASK, FIELD, GT_MASK, GT_TRACT, StageRun, require
from tractrlf.core.config import PipelineSettings
from tractrlf.field import io as field_io
from tractrlf.field.grid import GridSpec
from tractrlf.field.phantom import make_phantom
from tractrlf.sh import peak_volume

logger = logging.getLogger(__name__)


def run_phantom(settings: PipelineSettings, kind: str, out: Path) -> list[Path]:
    cfg = settings.phantom.model_copy(update={"kind": kind})
    out = Path(out)
    with StageRun(settings, "phantom") as stage:
        out.mkdir(parents=True, exist_ok=True)
        phantom = make_phantom(kind, GridSpec.cube(cfg.dims, cfg.spacing_mm), settings.rng_seed, cfg)
        field_io.write_field(out / FIELD, phantom.field)
        field_io.write_mask(out / GT_MASK, phantom.gt_mask)
        field_io.write_mask(out / AUG_MASK, phantom.aug_mask)
        field_io.write_streamlines(out / GT_TRACT, phantom.gt_streamlines)
        for kind_name, name in (("field", FIELD), ("gt_mask", GT_MASK), ("aug_mask", AUG_MASK), ("gt_tract", GT_TRACT)):
            stage.artifact(kind_name, out / name, {"phantom_kind": kind})
        return list(stage.artifacts)


def format_peak_dump(ijk, peaks: np.ndarray) -> str:
    coords = " ".join(f"{v:.6f}" for p in peaks for v in p)
    line = f"{ijk[0]} {ijk[1]} {ijk[2]} {len(peaks)}"
    return f"{line} {coords}" if len(peaks) else line


def run_inspect(settings: PipelineSettings, field_path: Path, mask_path: Path, out: Path | None = None) -> list[str]:
    """One line per mask voxel: `x y z n px py pz ...`."""
    field = field_io.read_field(require(field_path, "inspect"))
    mask = field_io.read_mask(require(mask_path, "inspect"))
    volume = peak_volume(field, mask, settings.peaks.model_copy(update={"order": field.order}))
    lines = [format_peak_dump(ijk, volume.at(ijk)) for ijk in mask.indices()]
    if out is not None:
        Path(out).write_text("\n".join(lines) + "\n")
    else:
        print("\n".join(lines))
    return lines


def register(subparsers) -> None:
    p = subparsers.add_parser("phantom", help="Build a synthetic phantom (field, masks, ground-truth tract)")
    p.add_argument("--kind", required=True, choices=["straight", "arc", "crossing"])
    p.add_argument("--dims", type=int, help="Voxels per axis")
    p.add_argument("--out", required=True, type=Path, help="Output directory")
    p.set_defaults(func=_phantom, overrides=_phantom_overrides)

    p = subparsers.add_parser("inspect", help="Dump per-voxel peaks of a field inside a mask")
    p.add_argument("--field", required=True, type=Path)
    p.add_argument("--mask", required=True, type=Path)
    p.add_argument("--out", type=Path, help="Write the dump here instead of stdout")
    p.set_defaults(func=_inspect)


def _phantom_overrides(args: argparse.Namespace) -> dict:
    return {"phantom": {"dims": args.dims}} if args.dims is not None else {}


def _phantom(settings: PipelineSettings, args: argparse.Namespace) -> None:
    run_phantom(settings, args.kind, args.out)


def _inspect(settings: PipelineSettings, args: argparse.Namespace) -> None:
    run_inspect(settings, args.field, args.mask, args.out)
