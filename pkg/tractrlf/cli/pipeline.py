import logging
from pathlib import Path
from typing import Sequence

from tractrlf.cli.data import run_phantom
from tractrlf.cli.mrm import run_mrm_refine, run_mrm_train
from tractrlf.cli.report import run_report
from tractrlf.cli.rl import run_rollout, run_train_rl
from tractrlf.cli.tracking import run_clean, run_eval, run_track
from tractrlf.cli.trlf import run_finetune, run_pretrain
from tractrlf.cli.common import GT_MASK, GT_TRACT
from tractrlf.core.config import PipelineSettings

logger = logging.getLogger(__name__)


def run_pipeline(settings: PipelineSettings, kinds: Sequence[str], mask: str = "tracking") -> dict[str, dict]:
    """phantom -> mrm -> train-rl -> rollout -> pretrain -> finetune -> track -> clean -> eval -> report."""
    work = Path(settings.workdir)
    phantoms = {kind: work / "phantoms" / kind for kind in kinds}
    for kind, directory in phantoms.items():
        run_phantom(settings, kind, directory)
        if mask == "tracking":
            run_mrm_train(settings, directory)
            run_mrm_refine(settings, directory)

    td3 = run_train_rl(settings, list(phantoms.values()), work / "models" / "td3.ckp", mask)
    datasets = run_rollout(settings, list(phantoms.values()), td3, work / "data", mask)
    pretrained = run_pretrain(settings, datasets["mixed"], work / "models" / "trlf_pretrain.ckp")

    scores: dict[str, dict] = {}
    for kind, directory in phantoms.items():
        tuned = run_finetune(settings, pretrained, datasets[kind], work / "models" / f"trlf_{kind}.ckp")
        scores[kind] = {}
        for policy, params in (("trlf", tuned), ("td3", td3)):
            raw = run_track(
                settings, directory, policy, work / "tracks" / f"{kind}_{policy}.trk", params, data_path=datasets[kind], mask=mask
            )
            cleaned = run_clean(settings, raw, directory / GT_TRACT, work / "tracks" / f"{kind}_{policy}_clean.trk")
            result = run_eval(settings, cleaned, directory / GT_MASK, work / "scores" / f"{kind}_{policy}.json")
            scores[kind][policy] = result.model_dump()
        logger.info("tract evaluated", extra={"fields": {"kind": kind, **{p: s["dice"] for p, s in scores[kind].items()}}})
    run_report(settings, work / "report")
    return scores


def register(subparsers) -> None:
    p = subparsers.add_parser("pipeline", help="Run every stage end to end on one or more phantom kinds")
    p.add_argument("--kinds", nargs="+", default=["straight", "arc"], choices=["straight", "arc", "crossing"])
    p.add_argument("--mask", choices=["tracking", "gt"], default="tracking", help="gt skips mask refinement")
    p.set_defaults(func=lambda settings, args: run_pipeline(settings, args.kinds, args.mask))
