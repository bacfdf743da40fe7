import numpy as np
import pytest

from tractrlf.core.errors import FormatError, InsufficientTrajectoriesError, MissingArtifactError, ShapeError
from tractrlf.env import PeakFollowingPolicy, TrackingEnv, rollout
from tractrlf.schemas.env import EnvConfig
from tractrlf.traj.dataset import (
    Trajectory,
    TrajectoryDataset,
    build_mixed_dataset,
    build_tract_dataset,
    from_rollout,
    returns_to_go,
)
from tractrlf.traj.io import manifest_path, read_trajectories, write_trajectories
from tractrlf.traj.segments import sample_segments, window

STATE_DIM = 334


def make_traj(n, tract_id=0, state_dim=STATE_DIM, fill=None):
    value = float(n if fill is None else fill)
    return Trajectory.from_rewards(
        np.full(n, 0.5), np.full((n, state_dim), value), np.tile([1.0, 0.0, 0.0], (n, 1)), tract_id
    )


# --- returns to go ---


def test_returns_to_go_examples():
    assert returns_to_go([0.5, 0.25, 1.0]).tolist() == [1.75, 1.25, 1.0]
    assert returns_to_go([2.0]).tolist() == [2.0]
    assert len(returns_to_go([])) == 0


def test_returns_to_go_matches_quadratic_oracle():
    rng = np.random.default_rng(0)
    for n in (1, 2, 7, 50):
        rewards = rng.uniform(-1, 1, size=n)
        oracle = [sum(rewards[t:]) for t in range(n)]
        got = returns_to_go(rewards)
        assert np.allclose(got, oracle, atol=1e-12)
        assert np.allclose(got[:-1] - got[1:], rewards[:-1], atol=1e-12)
        assert got[-1] == rewards[-1]


def test_trajectory_rejects_mismatched_lengths():
    with pytest.raises(ShapeError):
        Trajectory(np.zeros(3), np.zeros((2, STATE_DIM)), np.zeros((3, 3)))
    with pytest.raises(ShapeError):
        Trajectory(np.zeros(0), np.zeros((0, STATE_DIM)), np.zeros((0, 3)))


def test_trajectory_rewards_recovered_from_rtg():
    t = Trajectory.from_rewards([0.5, -0.25, 1.0], np.zeros((3, 4)), np.zeros((3, 3)))
    assert np.allclose(t.rewards, [0.5, -0.25, 1.0])
    assert t.total_return == pytest.approx(1.25)


def test_from_rollout_truncates_and_skips_discarded(make_line_space):
    env = TrackingEnv(make_line_space(length=32), EnvConfig(step_size_mm=0.5, min_len_mm=10.0))
    r = rollout(env, PeakFollowingPolicy(env), (0.75, 2.5, 2.5))
    t = from_rollout(r, tract_id=3, max_ep_len=10)
    assert len(t) == 10 and t.tract_id == 3
    assert t.states.shape == (10, STATE_DIM)
    assert t.rtg[0] == pytest.approx(r.rewards[:10].sum())

    short_env = TrackingEnv(make_line_space(length=32), EnvConfig(step_size_mm=0.5, min_len_mm=100.0))
    short = rollout(short_env, PeakFollowingPolicy(short_env), (0.75, 2.5, 2.5))
    assert short.discarded and from_rollout(short, 0) is None


# --- selection ---


def test_half_longest_selection():
    pool = [make_traj(n) for n in (10, 9, 8, 7, 6)]
    ds = build_tract_dataset({"af": pool}, 4, rng_seed=1)
    lengths = [len(t) for t in ds.trajectories]
    assert len(ds) == 4
    assert 10 in lengths and 9 in lengths
    assert lengths == sorted(lengths, reverse=True)
    assert ds.manifest.counts == {"af": {"longest": 2, "random": 2}}
    assert ds.manifest.kind == "tract_specific"


def test_selection_of_everything_is_identity():
    pool = [make_traj(n) for n in (3, 8, 5, 8, 1)]
    ds = build_tract_dataset({"cst": pool}, 5, rng_seed=2)
    assert [len(t) for t in ds.trajectories] == [3, 8, 5, 8, 1]


def test_selection_is_seeded():
    pool = [make_traj(n) for n in range(1, 30)]
    a = build_tract_dataset({"x": pool}, 10, rng_seed=5)
    b = build_tract_dataset({"x": pool}, 10, rng_seed=5)
    assert [len(t) for t in a.trajectories] == [len(t) for t in b.trajectories]


def test_selection_shortfall_names_the_source():
    with pytest.raises(InsufficientTrajectoriesError) as info:
        build_tract_dataset({"a": [make_traj(3)] * 5, "b": [make_traj(2)]}, 6, rng_seed=0)
    assert info.value.source == "b" and info.value.needed == 3 and info.value.available == 1


def test_quota_split_across_sources():
    sources = {"a": [make_traj(n, 0) for n in range(1, 6)], "b": [make_traj(n, 1) for n in range(1, 6)]}
    ds = build_tract_dataset(sources, 5, rng_seed=0)
    assert ds.manifest.counts == {"a": {"longest": 2, "random": 1}, "b": {"longest": 1, "random": 1}}
    assert [t.tract_id for t in ds.trajectories] == [0, 0, 0, 1, 1]


def test_mixed_dataset_pools_every_tract():
    tracts = [
        build_tract_dataset({f"t{k}": [make_traj(n, k) for n in range(2, 8)]}, 6, rng_seed=k) for k in range(3)
    ]
    mixed = build_mixed_dataset(tracts, 7, rng_seed=4)
    assert len(mixed) == 7 and mixed.manifest.kind == "mixed"
    assert sum(c["longest"] for c in mixed.manifest.counts.values()) == 4
    longest_three = sorted((len(t) for t in mixed.trajectories), reverse=True)[:3]
    assert longest_three == [7, 7, 7]
    with pytest.raises(InsufficientTrajectoriesError):
        build_mixed_dataset(tracts, 19, rng_seed=4)


# --- segments ---


def test_short_trajectory_window_is_left_padded():
    t = make_traj(3)
    seg = window(t, 0, 5)
    assert seg.mask.tolist() == [[False, False, True, True, True]]
    assert seg.timesteps.tolist() == [[0, 0, 0, 1, 2]]
    assert np.all(seg.states[0, :2] == 0.0) and np.all(seg.rtg[0, :2] == 0.0)
    assert np.allclose(seg.rtg[0, 2:, 0], t.rtg)


def test_timesteps_are_capped():
    seg = window(make_traj(12), 7, 5, max_ep_len=10)
    assert seg.timesteps.tolist() == [[7, 8, 9, 9, 9]]


def test_sampled_windows_are_contiguous_slices():
    rng = np.random.default_rng(3)
    trajectories = [Trajectory.from_rewards(rng.uniform(size=n), rng.normal(size=(n, 4)), rng.normal(size=(n, 3))) for n in (2, 9, 20)]
    batch = sample_segments(trajectories, 5, 64, rng)
    assert batch.states.shape == (64, 5, 4) and batch.K == 5
    for b in range(64):
        valid = batch.mask[b]
        ts = batch.timesteps[b][valid]
        assert np.all(np.diff(ts) == 1)
        source = next(t for t in trajectories if np.any(np.all(np.isclose(t.states, batch.states[b][valid][0]), axis=1)))
        assert np.allclose(batch.states[b][valid], source.states[ts])
        assert np.allclose(batch.actions[b][valid], source.actions[ts])


# --- files ---


def test_trajectory_file(tmp_path):
    ds = build_tract_dataset({"af": [make_traj(n) for n in (4, 2, 6)]}, 3, rng_seed=0)
    path = tmp_path / "af.trj"
    write_trajectories(path, ds)
    assert manifest_path(path).exists()
    back = read_trajectories(path)
    assert back.manifest == ds.manifest
    assert [len(t) for t in back.trajectories] == [4, 2, 6]
    for a, b in zip(ds.trajectories, back.trajectories):
        assert np.array_equal(a.rtg, b.rtg)
        assert np.array_equal(a.states, b.states)


def test_trajectory_file_errors(tmp_path):
    with pytest.raises(MissingArtifactError):
        read_trajectories(tmp_path / "missing.trj")
    narrow = TrajectoryDataset([make_traj(2, state_dim=10)], build_tract_dataset({"a": [make_traj(2)]}, 1, 0).manifest)
    with pytest.raises(FormatError):
        write_trajectories(tmp_path / "narrow.trj", narrow)
