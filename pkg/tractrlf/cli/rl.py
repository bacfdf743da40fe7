import argparse
import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from tractrlf.agents.networks import ActorPolicy
from tractrlf.agents.td3 import train_td3
from tractrlf.cli.common import GT_MASK, TRACKING_MASK, StageRun, load_tracking_space, require, write_jsonl
from tractrlf.core.config import PipelineSettings
from tractrlf.diffcore.checkpoint import load_checkpoint, save_checkpoint
from tractrlf.env import collect_rollouts, generate_seeds
from tractrlf.traj.dataset import build_mixed_dataset, build_tract_dataset, from_rollout
from tractrlf.traj.io import write_trajectories

logger = logging.getLogger(__name__)

MASKS = {"tracking": TRACKING_MASK, "gt": GT_MASK}


def run_train_rl(
    settings: PipelineSettings, phantom_dirs: Sequence[Path], out: Path, mask: str = "tracking"
) -> Path:
    out = Path(out)
    with StageRun(settings, "train-rl") as stage:
        spaces = [load_tracking_space(d, settings, "train-rl", MASKS[mask]) for d in phantom_dirs]
        params, log = train_td3(
            spaces, settings.env, settings.td3, settings.td3.episodes_budget, settings.rng_seed, settings.threads
        )
        out.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out, params)
        stage.artifact("td3_checkpoint", out, {"phantoms": [Path(d).name for d in phantom_dirs]})
        stage.artifact("td3_log", write_jsonl(out.with_name(out.stem + "_log.jsonl"), log))
    return out


def tract_dataset_path(out_dir: Path, name: str) -> Path:
    return Path(out_dir) / f"tract_{name}.trj"


def run_rollout(
    settings: PipelineSettings,
    phantom_dirs: Sequence[Path],
    params_path: Path,
    out_dir: Path,
    mask: str = "tracking",
) -> dict[str, Path]:
    """Roll the trained agent out on every phantom and build tract-specific and mixed datasets."""
    out_dir = Path(out_dir)
    written: dict[str, Path] = {}
    with StageRun(settings, "rollout") as stage:
        params = load_checkpoint(require(params_path, "rollout"))
        policy = ActorPolicy(params)
        pools, summary = [], []
        for tract_id, phantom_dir in enumerate(phantom_dirs):
            name = Path(phantom_dir).name
            space = load_tracking_space(phantom_dir, settings, "rollout", MASKS[mask])
            seeds = generate_seeds(space.mask, settings.traj.rollout_seeds_per_voxel, settings.rng_seed)
            rollouts = collect_rollouts(space, settings.env, lambda i, env: policy, seeds, settings.threads)
            trajectories = [
                t for t in (from_rollout(r, tract_id, settings.traj.max_ep_len) for r in rollouts) if t is not None
            ]
            summary.append(
                {
                    "tract": name,
                    "rollouts": len(rollouts),
                    "kept": len(trajectories),
                    "mean_return": float(np.mean([r.total_return for r in rollouts])),
                    "mean_length": float(np.mean([len(r.transitions) for r in rollouts])),
                }
            )
            logger.info("rollouts collected", extra={"fields": summary[-1]})
            pools.append(build_tract_dataset({name: trajectories}, len(trajectories), settings.rng_seed))
            tract = build_tract_dataset({name: trajectories}, settings.traj.per_tract, settings.rng_seed)
            written[name] = tract_dataset_path(out_dir, name)
            out_dir.mkdir(parents=True, exist_ok=True)
            write_trajectories(written[name], tract)
            stage.artifact("tract_dataset", written[name], {"tract": name})

        mixed = build_mixed_dataset(pools, settings.traj.mixed, settings.rng_seed)
        written["mixed"] = out_dir / "mixed.trj"
        write_trajectories(written["mixed"], mixed)
        stage.artifact("mixed_dataset", written["mixed"])
        stage.artifact("rollout_summary", write_jsonl(out_dir / "rollout_summary.jsonl", summary))
    return written


def register(subparsers) -> None:
    p = subparsers.add_parser("train-rl", help="Train the TD3 tracking agent")
    p.add_argument("--phantoms", required=True, nargs="+", type=Path, help="Phantom directories")
    p.add_argument("--out", required=True, type=Path, help="Checkpoint path")
    p.add_argument("--mask", choices=sorted(MASKS), default="tracking")
    p.add_argument("--episodes", type=int, help="Episode budget")
    p.set_defaults(
        func=lambda settings, args: run_train_rl(settings, args.phantoms, args.out, args.mask),
        overrides=_train_overrides,
    )

    p = subparsers.add_parser("rollout", help="Collect agent trajectories into training datasets")
    p.add_argument("--phantoms", required=True, nargs="+", type=Path, help="Phantom directories")
    p.add_argument("--params", required=True, type=Path, help="TD3 checkpoint")
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--mask", choices=sorted(MASKS), default="tracking")
    p.set_defaults(func=lambda settings, args: run_rollout(settings, args.phantoms, args.params, args.out_dir, args.mask))


def _train_overrides(args: argparse.Namespace) -> dict:
    return {"td3": {"episodes_budget": args.episodes}} if args.episodes is not None else {}
