import argparse
from pathlib import Path

from tractrlf.cli.common import AUG_MASK, FIELD, GT_MASK, MRM_CKPT, TRACKING_MASK, StageRun, require, write_jsonl
from tractrlf.core.config import PipelineSettings
from tractrlf.diffcore.checkpoint import load_checkpoint, save_checkpoint
from tractrlf.field import io as field_io
from tractrlf.mrm import refine_mask, train_mrm


def run_mrm_train(settings: PipelineSettings, phantom_dir: Path) -> Path:
    phantom_dir = Path(phantom_dir)
    with StageRun(settings, "mrm-train") as stage:
        field = field_io.read_field(require(phantom_dir / FIELD, "mrm-train"))
        aug = field_io.read_mask(require(phantom_dir / AUG_MASK, "mrm-train"))
        gt = field_io.read_mask(require(phantom_dir / GT_MASK, "mrm-train"))
        params, log = train_mrm(field, aug, gt, settings.mrm, settings.rng_seed)
        save_checkpoint(phantom_dir / MRM_CKPT, params)
        stage.artifact("mrm_checkpoint", phantom_dir / MRM_CKPT)
        stage.artifact("mrm_log", write_jsonl(phantom_dir / "mrm_log.jsonl", log))
    return phantom_dir / MRM_CKPT


def run_mrm_refine(settings: PipelineSettings, phantom_dir: Path) -> Path:
    phantom_dir = Path(phantom_dir)
    with StageRun(settings, "mrm-refine") as stage:
        params = load_checkpoint(require(phantom_dir / MRM_CKPT, "mrm-refine"))
        field = field_io.read_field(require(phantom_dir / FIELD, "mrm-refine"))
        aug = field_io.read_mask(require(phantom_dir / AUG_MASK, "mrm-refine"))
        refined = refine_mask(params, field, aug, settings.mrm)
        field_io.write_mask(phantom_dir / TRACKING_MASK, refined)
        stage.artifact("tracking_mask", phantom_dir / TRACKING_MASK, {"voxels": refined.count})
    return phantom_dir / TRACKING_MASK


def register(subparsers) -> None:
    p = subparsers.add_parser("mrm-train", help="Train the mask refinement classifier on a phantom")
    p.add_argument("--phantom", required=True, type=Path, help="Phantom directory")
    p.set_defaults(func=lambda settings, args: run_mrm_train(settings, args.phantom))

    p = subparsers.add_parser("mrm-refine", help="Write the refined tracking mask")
    p.add_argument("--phantom", required=True, type=Path, help="Phantom directory")
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=lambda settings, args: run_mrm_refine(settings, args.phantom), overrides=_overrides)


def _overrides(args: argparse.Namespace) -> dict:
    return {"mrm": {"threshold": args.threshold}} if args.threshold is not None else {}
