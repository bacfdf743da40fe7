import numpy as np
import pytest
from pydantic import ValidationError

from tractrlf.core.errors import ShapeError, UsageError
from tractrlf.field.grid import GridSpec, TrackingMask
from tractrlf.field.phantom import make_phantom
from tractrlf.post.cleaning import clean, mdf_distance, resample_streamline
from tractrlf.post.metrics import score, score_tract
from tractrlf.schemas.post import CleanConfig, TractScores


def mask_from(spec, voxels):
    grid = np.zeros(spec.shape, dtype=bool)
    for v in voxels:
        grid[v] = True
    return TrackingMask(spec, grid)


def line(y, z=2.5, x0=0.5, x1=10.5, n=20):
    return np.column_stack([np.linspace(x0, x1, n), np.full(n, y), np.full(n, z)])


# --- overlap scores ---


def test_score_example():
    spec = GridSpec(dims=(4, 4, 1))
    pred = mask_from(spec, [(0, 0, 0), (1, 0, 0), (3, 3, 0)])
    gt = mask_from(spec, [(0, 0, 0), (1, 0, 0), (2, 0, 0), (2, 1, 0)])
    s = score(pred, gt)
    assert s.dice == pytest.approx(4 / 7)
    assert s.ovl == pytest.approx(0.5)
    assert s.ovr == pytest.approx(0.25)
    assert (s.intersection, s.pred_voxels, s.gt_voxels) == (2, 3, 4)


def test_score_matches_set_oracle():
    rng = np.random.default_rng(0)
    spec = GridSpec(dims=(6, 5, 4))
    for _ in range(50):
        a = rng.random(spec.shape) < rng.uniform(0, 0.6)
        b = rng.random(spec.shape) < rng.uniform(0.05, 0.6)
        b[0, 0, 0] = True
        set_a = set(map(tuple, np.argwhere(a)))
        set_b = set(map(tuple, np.argwhere(b)))
        s = score(TrackingMask(spec, a), TrackingMask(spec, b))
        inter = len(set_a & set_b)
        assert s.dice == pytest.approx(2 * inter / (len(set_a) + len(set_b)))
        assert s.ovl == pytest.approx(inter / len(set_b))
        assert s.ovr == pytest.approx(len(set_a - set_b) / len(set_b))
        assert 0.0 <= s.dice <= 1.0 and 0.0 <= s.ovl <= 1.0 and s.ovr >= 0.0


def test_identical_and_empty_predictions():
    spec = GridSpec(dims=(3, 3, 3))
    gt = mask_from(spec, [(1, 1, 1), (1, 1, 2)])
    perfect = score(gt, gt)
    assert (perfect.dice, perfect.ovl, perfect.ovr) == (1.0, 1.0, 0.0)
    empty = score(mask_from(spec, []), gt)
    assert (empty.dice, empty.ovl, empty.ovr) == (0.0, 0.0, 0.0)


def test_score_errors():
    spec = GridSpec(dims=(3, 3, 3))
    with pytest.raises(UsageError):
        score(mask_from(spec, [(0, 0, 0)]), mask_from(spec, []))
    with pytest.raises(ShapeError):
        score(mask_from(GridSpec(dims=(3, 3, 4)), [(0, 0, 0)]), mask_from(spec, [(0, 0, 0)]))


def test_scores_reject_inconsistent_values():
    with pytest.raises(ValidationError):
        TractScores(dice=0.9, ovl=0.5, ovr=0.25, intersection=2, pred_voxels=3, gt_voxels=4)


def test_score_tract_voxelizes_streamlines():
    spec = GridSpec(dims=(12, 5, 5))
    gt = mask_from(spec, [(i, 2, 2) for i in range(11)])
    s = score_tract([line(2.5)], gt)
    assert s.dice == pytest.approx(1.0)
    assert "dice=1.000000" in s.as_kv()


# --- distances and resampling ---


def test_mdf_examples():
    a = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    assert mdf_distance(a, a[::-1]) == 0.0
    assert mdf_distance(a, a + [0.0, 2.0, 0.0]) == pytest.approx(2.0)
    with pytest.raises(ShapeError):
        mdf_distance(a, a[:2])


def test_mdf_is_symmetric():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = rng.normal(size=(8, 3)), rng.normal(size=(8, 3))
        assert mdf_distance(a, b) == pytest.approx(mdf_distance(b, a))
        assert mdf_distance(a, b) >= 0.0


def test_resample_is_arc_length_uniform():
    out = resample_streamline(np.array([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]]), 4)
    assert np.allclose(out[:, 0], [0.0, 1.0, 2.0, 3.0])
    bent = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 3.0, 0.0]])
    out = resample_streamline(bent, 5)
    assert np.array_equal(out[0], bent[0]) and np.array_equal(out[-1], bent[-1])
    steps = np.linalg.norm(np.diff(out, axis=0), axis=1)
    assert np.allclose(steps, 1.0, atol=1e-5)


def test_resample_errors():
    with pytest.raises(UsageError):
        resample_streamline(np.zeros((1, 3)), 8)
    with pytest.raises(UsageError):
        resample_streamline(np.zeros((2, 3)), 1)


# --- cleaning ---


def test_clean_drops_strays():
    refs = [line(2.5), line(3.0)]
    tract = [line(2.8), line(9.0), np.array([[1.0, 1.0, 1.0]]), line(2.5)[::-1]]
    result = clean(tract, refs, CleanConfig(radius_mm=1.0))
    assert result.kept_indices == [0, 3]
    assert result.rejected == 2
    assert np.isinf(result.nearest_mm[2])
    report = result.report()
    assert [r["kept"] for r in report] == [True, False, False, True]
    assert report[1]["nearest_mm"] == pytest.approx(6.0, abs=1e-4)


def test_clean_radius_is_monotone():
    rng = np.random.default_rng(2)
    refs = [line(2.5)]
    tract = [line(2.5 + offset) for offset in rng.uniform(0, 6, size=15)]
    previous: set = set()
    for radius in (0.5, 1.0, 2.0, 4.0, 8.0):
        kept = set(clean(tract, refs, CleanConfig(radius_mm=radius)).kept_indices)
        assert previous <= kept
        previous = kept
    assert previous == set(range(15))


def test_clean_needs_references():
    with pytest.raises(UsageError):
        clean([line(2.5)], [], CleanConfig())


def test_clean_keeps_bundle_and_rejects_offset_strays(small_phantom_cfg):
    references = make_phantom("straight", GridSpec.cube(12), 1, small_phantom_cfg).gt_streamlines
    bundle = make_phantom("straight", GridSpec.cube(12), 2, small_phantom_cfg).gt_streamlines
    strays = [s + np.array([0.0, 10.0, 0.0]) for s in bundle]
    result = clean(bundle + strays, references, CleanConfig(radius_mm=4.0))
    kept = set(result.kept_indices)
    n = len(bundle)
    assert sum(i in kept for i in range(n)) >= 0.99 * n
    assert sum(i not in kept for i in range(n, 2 * n)) >= 0.95 * n
