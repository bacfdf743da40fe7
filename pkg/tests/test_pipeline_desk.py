"""End-to-end desk run on straight and arc phantoms (pytest --slow, tens of minutes)."""

from pathlib import Path

import pytest

from tractrlf.cli.common import read_jsonl
from tractrlf.cli.pipeline import run_pipeline
from tractrlf.core.config import load_settings
from tractrlf.field import io as field_io
from tractrlf.field.grid import dilate
from tractrlf.post.metrics import score

DESK_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "desk.toml"

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    work = tmp_path_factory.mktemp("desk")
    settings = load_settings(DESK_CONFIG, {"workdir": work})
    return settings, run_pipeline(settings, ["straight", "arc"])


def test_td3_learns_to_follow_peaks(desk_run):
    settings, _ = desk_run
    log = read_jsonl(Path(settings.workdir) / "models" / "td3_log.jsonl")
    assert log[-1]["episodes"] == settings.td3.episodes_budget
    assert log[-1]["mean_step_reward"] > 0.8


@pytest.mark.parametrize("kind", ["straight", "arc"])
def test_transformer_matches_td3(desk_run, kind):
    _, scores = desk_run
    trlf, td3 = scores[kind]["trlf"], scores[kind]["td3"]
    assert trlf["dice"] >= 0.6
    assert trlf["dice"] >= td3["dice"] - 0.05


@pytest.mark.parametrize("kind", ["straight", "arc"])
def test_refined_mask_covers_the_bundle(desk_run, kind):
    settings, _ = desk_run
    directory = Path(settings.workdir) / "phantoms" / kind
    refined = field_io.read_mask(directory / "tracking_mask.msk")
    gt = field_io.read_mask(directory / "gt_mask.msk")
    assert score(refined, dilate(gt, 1.0)).dice >= 0.8


def test_report_lists_every_stage(desk_run):
    settings, _ = desk_run
    report = (Path(settings.workdir) / "report" / "report.txt").read_text()
    for series in ("models__td3_log", "models__trlf_pretrain_loss", "data__rollout_summary"):
        assert series in report
