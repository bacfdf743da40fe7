import argparse
import itertools
import logging
from pathlib import Path

import numpy as np

from tractrlf.cli.common import StageRun, load_tracking_space, require, write_jsonl
from tractrlf.core.config import PipelineSettings
from tractrlf.diffcore.checkpoint import load_checkpoint, save_checkpoint
from tractrlf.env import TrackingEnv, generate_seeds
from tractrlf.traj.io import read_trajectories
from tractrlf.transformer.card import write_model_card
from tractrlf.transformer.generate import generate
from tractrlf.transformer.train import finetune, pretrain

logger = logging.getLogger(__name__)

ABLATION_HEADS = (1, 2)
ABLATION_CONTEXT = (20, 30, 40)
ABLATION_WIDTH = (128, 512)


def _iteration_saver(stage: StageRun, out: Path):
    def save(iteration: int, params, record: dict) -> None:
        path = out.with_name(f"{out.stem}_iter{iteration:03d}{out.suffix}")
        save_checkpoint(path, params)
        stage.artifact("trlf_iteration_checkpoint", path, {"iteration": iteration})

    return save


def run_pretrain(settings: PipelineSettings, data_path: Path, out: Path) -> Path:
    out = Path(out)
    with StageRun(settings, "pretrain") as stage:
        dataset = read_trajectories(require(data_path, "pretrain"))
        out.parent.mkdir(parents=True, exist_ok=True)
        params, history = pretrain(
            dataset, settings.trlf, settings.rng_seed, dataset.trajectories[0].states.shape[1], _iteration_saver(stage, out)
        )
        save_checkpoint(out, params)
        write_model_card(out, "pretrain", settings.trlf, params, settings.rng_seed, {"mixed": dataset.manifest})
        stage.artifact("trlf_checkpoint", out, {"stage_kind": "pretrain"})
        stage.artifact("pretrain_loss", write_jsonl(out.with_name(out.stem + "_loss.jsonl"), _loss_records(history)))
    return out


def run_finetune(settings: PipelineSettings, params_path: Path, data_path: Path, out: Path) -> Path:
    out = Path(out)
    with StageRun(settings, "finetune") as stage:
        base = load_checkpoint(require(params_path, "finetune"))
        dataset = read_trajectories(require(data_path, "finetune"))
        out.parent.mkdir(parents=True, exist_ok=True)
        params, history = finetune(base, dataset, settings.trlf, settings.rng_seed, _iteration_saver(stage, out))
        save_checkpoint(out, params)
        write_model_card(out, "finetune", settings.trlf, params, settings.rng_seed, {"tract": dataset.manifest})
        stage.artifact("trlf_checkpoint", out, {"stage_kind": "finetune"})
        stage.artifact("finetune_loss", write_jsonl(out.with_name(out.stem + "_loss.jsonl"), _loss_records(history)))
    return out


def _loss_records(history) -> list[dict]:
    return [{"step": i, "loss": loss} for i, loss in enumerate(history.step_losses)]


def run_ablation(settings: PipelineSettings, data_path: Path, phantom_dir: Path, out: Path) -> list[dict]:
    """
    One desk pretraining iteration per (heads, K, d) configuration, then one
    generated streamline each. Results are tabulated, not ranked.
    """
    out = Path(out)
    rows = []
    with StageRun(settings, "ablation") as stage:
        dataset = read_trajectories(require(data_path, "ablation"))
        space = load_tracking_space(phantom_dir, settings, "ablation")
        seed_point = generate_seeds(space.mask, 1, settings.rng_seed)[0]
        for heads, K, d in itertools.product(ABLATION_HEADS, ABLATION_CONTEXT, ABLATION_WIDTH):
            cfg = settings.trlf.model_copy(update={"n_heads": heads, "K": K, "d": d, "pretrain_iters": 1})
            params, history = pretrain(dataset, cfg, settings.rng_seed, dataset.trajectories[0].states.shape[1])
            result = generate(params, cfg, TrackingEnv(space, settings.env), seed_point)
            rows.append(
                {
                    "n_heads": heads,
                    "K": K,
                    "d": d,
                    "parameters": params.n_params(),
                    "final_loss": history.step_losses[-1],
                    "streamline_points": len(result.streamline),
                    "mean_step_reward": float(np.mean(result.rewards)) if len(result.rewards) else 0.0,
                }
            )
            logger.info("ablation configuration", extra={"fields": rows[-1]})
        out.parent.mkdir(parents=True, exist_ok=True)
        stage.artifact("ablation_table", write_jsonl(out, rows))
    return rows


def register(subparsers) -> None:
    p = subparsers.add_parser("pretrain", help="Pretrain the transformer on the mixed dataset")
    p.add_argument("--data", required=True, type=Path, help="Mixed TRLF-TRJ dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--iters", type=int)
    p.set_defaults(func=lambda settings, args: run_pretrain(settings, args.data, args.out), overrides=_pretrain_overrides)

    p = subparsers.add_parser("finetune", help="Append and fine-tune the final block on one tract")
    p.add_argument("--params", required=True, type=Path, help="Pretrained checkpoint")
    p.add_argument("--data", required=True, type=Path, help="Tract-specific TRLF-TRJ dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--iters", type=int)
    p.set_defaults(
        func=lambda settings, args: run_finetune(settings, args.params, args.data, args.out),
        overrides=_finetune_overrides,
    )

    p = subparsers.add_parser("ablation", help="Train and sample every (heads, K, d) grid configuration")
    p.add_argument("--data", required=True, type=Path, help="Mixed TRLF-TRJ dataset")
    p.add_argument("--phantom", required=True, type=Path, help="Phantom directory for generation")
    p.add_argument("--out", required=True, type=Path, help="Result table (jsonl)")
    p.set_defaults(func=lambda settings, args: run_ablation(settings, args.data, args.phantom, args.out))


def _pretrain_overrides(args: argparse.Namespace) -> dict:
    return {"trlf": {"pretrain_iters": args.iters}} if args.iters is not None else {}


def _finetune_overrides(args: argparse.Namespace) -> dict:
    return {"trlf": {"finetune_iters": args.iters}} if args.iters is not None else {}
