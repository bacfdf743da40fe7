import argparse
import json
import logging
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from tractrlf.agents.networks import ActorPolicy
from tractrlf.cli.common import GT_MASK, GT_TRACT, StageRun, load_tracking_space, require, write_jsonl
from tractrlf.cli.rl import MASKS
from tractrlf.core.config import PipelineSettings
from tractrlf.core.errors import UsageError
from tractrlf.diffcore.checkpoint import load_checkpoint
from tractrlf.env import PeakFollowingPolicy, Rollout, TrackingSpace, collect_rollouts, generate_seeds
from tractrlf.field import io as field_io
from tractrlf.field.phantom import longest_path_steps
from tractrlf.post.cleaning import clean
from tractrlf.post.metrics import score, voxelize
from tractrlf.schemas.post import TractScores
from tractrlf.traj.io import read_trajectories
from tractrlf.transformer.generate import ReturnConditionedPolicy, resolve_rtg

logger = logging.getLogger(__name__)

POLICIES = ("td3", "trlf", "oracle")


def track_space(
    settings: PipelineSettings,
    space: TrackingSpace,
    policy: str,
    params=None,
    rtg: Optional[float] = None,
    seeds_per_voxel: Optional[int] = None,
) -> list[Rollout]:
    """Track from every seed in the space's mask; results are in seed order."""
    seeds = generate_seeds(space.mask, seeds_per_voxel or settings.env.seeds_per_voxel, settings.rng_seed)
    if policy == "oracle":
        factory = lambda i, env: PeakFollowingPolicy(env)  # noqa: E731
    elif params is None:
        raise UsageError(f"policy {policy} needs --params")
    elif policy == "td3":
        actor = ActorPolicy(params)
        factory = lambda i, env: actor  # noqa: E731
    elif policy == "trlf":
        factory = lambda i, env: ReturnConditionedPolicy(params, settings.trlf, rtg)  # noqa: E731
    else:
        raise UsageError(f"unknown policy {policy!r}; expected one of {', '.join(POLICIES)}")
    return collect_rollouts(space, settings.env, factory, seeds, settings.threads)


def kept_streamlines(rollouts: Sequence[Rollout]) -> list[np.ndarray]:
    return [r.streamline for r in rollouts if not r.discarded]


def tracking_summary(rollouts: Sequence[Rollout], **fields) -> dict:
    rewards = np.concatenate([r.rewards for r in rollouts]) if rollouts else np.zeros(0)
    return {
        **fields,
        "seeds": len(rollouts),
        "kept": sum(1 for r in rollouts if not r.discarded),
        "mean_step_reward": float(rewards.mean()) if rewards.size else 0.0,
        "mean_length_mm": float(np.mean([r.length_mm for r in rollouts])) if rollouts else 0.0,
    }


def _conditioning_return(settings: PipelineSettings, phantom_dir: Path, data_path: Optional[Path]) -> float:
    dataset = read_trajectories(require(data_path, "track")) if data_path is not None else None
    gt = field_io.read_streamlines(require(Path(phantom_dir) / GT_TRACT, "track"))
    return resolve_rtg(settings.trlf, dataset, longest_path_steps(gt, settings.env.step))


def clean_and_score(settings: PipelineSettings, streamlines, phantom_dir: Path) -> tuple[list, TractScores]:
    phantom_dir = Path(phantom_dir)
    references = field_io.read_streamlines(require(phantom_dir / GT_TRACT, "eval"))
    gt_mask = field_io.read_mask(require(phantom_dir / GT_MASK, "eval"))
    kept = clean(streamlines, references, settings.post).kept if streamlines else []
    return kept, score(voxelize(kept, gt_mask.spec), gt_mask)


def run_track(
    settings: PipelineSettings,
    phantom_dir: Path,
    policy: str,
    out: Path,
    params_path: Optional[Path] = None,
    rtg: Optional[float] = None,
    rtg_sweep: Optional[Sequence[float]] = None,
    data_path: Optional[Path] = None,
    seeds_per_voxel: Optional[int] = None,
    mask: str = "tracking",
) -> Path:
    out = Path(out)
    with StageRun(settings, "track") as stage:
        params = load_checkpoint(require(params_path, "track")) if params_path is not None else None
        space = load_tracking_space(phantom_dir, settings, "track", MASKS[mask])
        out.parent.mkdir(parents=True, exist_ok=True)
        if policy == "trlf" and rtg is None:
            rtg = _conditioning_return(settings, phantom_dir, data_path)

        rollouts = track_space(settings, space, policy, params, rtg, seeds_per_voxel)
        field_io.write_streamlines(out, kept_streamlines(rollouts))
        summary = tracking_summary(rollouts, policy=policy, rtg=rtg)
        logger.info("tracking finished", extra={"fields": summary})
        stage.artifact("tract", out, {"policy": policy, "rtg": rtg})
        stage.artifact("track_summary", write_jsonl(out.with_name(out.stem + "_summary.jsonl"), [summary]))

        if rtg_sweep:
            if policy != "trlf":
                raise UsageError("--rtg-sweep applies to the trlf policy only")
            rows = []
            for value in rtg_sweep:
                swept = track_space(settings, space, policy, params, value, seeds_per_voxel)
                _, scores = clean_and_score(settings, kept_streamlines(swept), phantom_dir)
                rows.append({**tracking_summary(swept, rtg=value), **scores.model_dump()})
                logger.info("rtg sweep point", extra={"fields": {"rtg": value, "dice": scores.dice}})
            stage.artifact("rtg_sweep", write_jsonl(out.with_name(out.stem + "_rtg_sweep.jsonl"), rows))
    return out


def run_clean(
    settings: PipelineSettings, tract_path: Path, references_path: Path, out: Path
) -> Path:
    out = Path(out)
    with StageRun(settings, "clean") as stage:
        tract = field_io.read_streamlines(require(tract_path, "clean"))
        references = field_io.read_streamlines(require(references_path, "clean"))
        result = clean(tract, references, settings.post)
        out.parent.mkdir(parents=True, exist_ok=True)
        field_io.write_streamlines(out, result.kept)
        stage.artifact("clean_tract", out, {"radius_mm": settings.post.radius_mm, "rejected": result.rejected})
        stage.artifact("rejection_report", write_jsonl(out.with_name(out.stem + "_rejections.jsonl"), result.report()))
    return out


def run_eval(settings: PipelineSettings, tract_path: Path, gt_mask_path: Path, out: Optional[Path] = None) -> TractScores:
    with StageRun(settings, "eval") as stage:
        tract = field_io.read_streamlines(require(tract_path, "eval"))
        gt = field_io.read_mask(require(gt_mask_path, "eval"))
        scores = score(voxelize(tract, gt.spec), gt)
        print(scores.as_kv())
        logger.info("tract scored", extra={"fields": scores.model_dump()})
        if out is not None:
            out = Path(out)
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(json.dumps({**scores.model_dump(), "ovr_denominator": "gt_voxels"}, sort_keys=True) + "\n")
            stage.artifact("scores", out, {"radius_mm": settings.post.radius_mm})
    return scores


def register(subparsers) -> None:
    p = subparsers.add_parser("track", help="Track a phantom with td3, trlf or the peak-following oracle")
    p.add_argument("--phantom", required=True, type=Path)
    p.add_argument("--policy", required=True, choices=POLICIES)
    p.add_argument("--params", type=Path, help="Policy checkpoint (td3 or trlf)")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--rtg", type=float, help="Conditioning return; default follows trlf.rtg_mode")
    p.add_argument("--rtg-sweep", type=float, nargs="+", help="Also track and score at each of these returns")
    p.add_argument("--data", type=Path, help="Training dataset (rtg_mode dataset_max)")
    p.add_argument("--seeds-per-voxel", type=int)
    p.add_argument("--mask", choices=sorted(MASKS), default="tracking")
    p.set_defaults(func=_track)

    p = subparsers.add_parser("clean", help="Drop streamlines farther than the radius from every reference")
    p.add_argument("--tract", required=True, type=Path)
    p.add_argument("--references", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--radius", type=float, help="Search radius in mm")
    p.set_defaults(
        func=lambda settings, args: run_clean(settings, args.tract, args.references, args.out),
        overrides=_clean_overrides,
    )

    p = subparsers.add_parser("eval", help="Dice, overlap and overreach against a ground-truth mask")
    p.add_argument("--tract", required=True, type=Path)
    p.add_argument("--gt-mask", required=True, type=Path)
    p.add_argument("--out", type=Path, help="Write scores as JSON")
    p.set_defaults(func=lambda settings, args: run_eval(settings, args.tract, args.gt_mask, args.out))


def _track(settings: PipelineSettings, args: argparse.Namespace) -> None:
    run_track(
        settings,
        args.phantom,
        args.policy,
        args.out,
        params_path=args.params,
        rtg=args.rtg,
        rtg_sweep=args.rtg_sweep,
        data_path=args.data,
        seeds_per_voxel=args.seeds_per_voxel,
        mask=args.mask,
    )


def _clean_overrides(args: argparse.Namespace) -> dict:
    return {"post": {"radius_mm": args.radius}} if args.radius is not None else {}
