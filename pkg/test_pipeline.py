#!/usr/bin/env python3
"""
Tests for preprocessing: trip splitting, resampling, neighbor selection, windowing.

Usage:
    uv run pytest test_pipeline.py
"""

import numpy as np
import pytest

from src.data.dataset import (
    FeatureFrame,
    TrajectoryDataset,
    heading_dislocations,
    heading_to_cartesian,
    split_by_trip,
    trip_split_indices,
)
from src.data.pipeline import (
    Direction,
    Interaction,
    NeighborTrack,
    PipelineConfig,
    RawFix,
    SequenceSample,
    Trip,
    TripRole,
    detect_interactions,
    filter_outliers,
    hermite_resample,
    run_pipeline,
    select_neighbors,
    split_trips,
    validate_sample,
)
from src.navigation.codec import LabelCodec
from src.navigation.geometry import FairwayGeometry
from src.utils.errors import TooShort


def straight_fairway(length: float = 10000.0) -> FairwayGeometry:
    return FairwayGeometry(
        centerline=np.array([[0.0, 75.0], [length, 75.0]]),
        right_border=np.array([[0.0, 0.0], [length, 0.0]]),
        left_border=np.array([[0.0, 150.0], [length, 150.0]]),
    )


def track(agent_id, times, x0, speed, lane, direction=Direction.UPSTREAM):
    """Constant-velocity fixes along the x axis."""
    return [
        RawFix(agent_id, float(t), x0 + speed * t, lane, direction, vx=speed, vy=0.0)
        for t in times
    ]


def encounter_fixes():
    times = np.arange(0.0, 1201.0, 60.0)
    return (
        track("up", times, 1000.0, 3.0, 50.0)
        + track("down", times, 5000.0, -4.0, 90.0, Direction.DOWNSTREAM)
    )


# ----------------------------------------------------------------------
# trip splitting and cleaning
# ----------------------------------------------------------------------

def test_gap_of_exactly_one_hour_keeps_trip():
    fixes = track("a", [0.0, 60.0, 3660.0], 0.0, 2.0, 50.0)
    trips = split_trips(fixes, max_gap=3600.0)
    assert len(trips) == 1


def test_gap_longer_than_one_hour_splits_trip():
    fixes = track("a", [0.0, 60.0, 3660.5, 3720.5], 0.0, 2.0, 50.0)
    trips = split_trips(fixes, max_gap=3600.0)
    assert [len(t.fixes) for t in trips] == [2, 2]
    assert [t.key for t in trips] == ["a#0", "a#1"]


def test_direction_change_splits_trip():
    fixes = track("a", [0.0, 60.0], 0.0, 2.0, 50.0) + track("a", [120.0, 180.0], 500.0, -2.0, 50.0, Direction.DOWNSTREAM)
    trips = split_trips(fixes)
    assert [t.direction for t in trips] == [Direction.UPSTREAM, Direction.DOWNSTREAM]


def test_duplicate_timestamp_keeps_first_fix():
    fixes = [
        RawFix("a", 0.0, 0.0, 50.0, vx=2.0, vy=0.0),
        RawFix("a", 0.0, 99.0, 50.0, vx=2.0, vy=0.0),
        RawFix("a", 60.0, 120.0, 50.0, vx=2.0, vy=0.0),
    ]
    (trip,) = split_trips(fixes)
    assert [f.x for f in trip.fixes] == [0.0, 120.0]


def test_roles_of_downstream_and_moored_trips():
    fixes = (
        track("up", [0.0, 60.0], 0.0, 2.0, 50.0)
        + track("down", [0.0, 60.0], 5000.0, -3.0, 90.0, Direction.DOWNSTREAM)
        + track("moored", [0.0, 60.0], 2000.0, 0.1, 10.0)
    )
    roles = {t.agent_id: t.role for t in split_trips(fixes, mooring_speed=0.3)}
    assert roles == {
        "down": TripRole.SURROUNDING_ONLY,
        "moored": TripRole.SURROUNDING_ONLY,
        "up": TripRole.TARGET_ELIGIBLE,
    }


def corrupted_track(rng, count=60):
    """Constant-speed fixes with a share of them displaced by a few hundred meters."""
    times = np.cumsum(rng.uniform(20.0, 90.0, count))
    xs = 3.0 * times
    ys = np.full(count, 50.0)
    hit = rng.random(count) < 0.15
    xs[hit] += rng.uniform(-600.0, 600.0, hit.sum())
    ys[hit] += rng.uniform(-40.0, 40.0, hit.sum())
    return [RawFix("a", float(t), float(x), float(y)) for t, x, y in zip(times, xs, ys)]


def reference_outlier_count(fixes, max_speed, max_accel):
    kept = [0]
    for i in range(1, len(fixes)):
        a = fixes[kept[-1]]
        b = fixes[i]
        speed = np.hypot(b.x - a.x, b.y - a.y) / (b.t - a.t)
        if speed > max_speed:
            continue
        if len(kept) >= 2:
            p = fixes[kept[-2]]
            before = np.hypot(a.x - p.x, a.y - p.y) / (a.t - p.t)
            if abs(speed - before) / (b.t - a.t) > max_accel:
                continue
        kept.append(i)
    return len(fixes) - len(kept)


def test_outlier_jump_is_dropped():
    fixes = track("a", [0.0, 60.0, 120.0], 0.0, 3.0, 50.0)
    fixes.append(RawFix("a", 180.0, 1360.0, 50.0))
    fixes += track("a", [240.0], 0.0, 3.0, 50.0)
    cleaned = filter_outliers(Trip("a", fixes, Direction.UPSTREAM), max_speed=8.0, max_accel=0.5)
    assert [f.t for f in cleaned.fixes] == [0.0, 60.0, 120.0, 240.0]


def test_outlier_filter_is_idempotent():
    rng = np.random.default_rng(4)
    for _ in range(20):
        once = filter_outliers(Trip("a", corrupted_track(rng), Direction.UPSTREAM))
        twice = filter_outliers(once)
        assert twice.fixes == once.fixes


def test_outlier_count_matches_reference_filter():
    rng = np.random.default_rng(9)
    dropped = 0
    for _ in range(50):
        fixes = corrupted_track(rng)
        cleaned = filter_outliers(Trip("a", fixes, Direction.UPSTREAM), max_speed=8.0, max_accel=0.5)
        expected = reference_outlier_count(fixes, 8.0, 0.5)
        assert len(fixes) - len(cleaned.fixes) == expected
        dropped += expected
    assert dropped > 0


# ----------------------------------------------------------------------
# resampling
# ----------------------------------------------------------------------

def test_hermite_reproduces_source_fixes_on_grid():
    t = np.array([0.0, 60.0, 120.0, 180.0])
    fixes = [RawFix("a", ti, 3.0 * ti, 0.001 * ti ** 2, vx=3.0, vy=0.002 * ti) for ti in t]
    out = hermite_resample(Trip("a", fixes, Direction.UPSTREAM), dt=60.0)
    np.testing.assert_array_equal(out.times(), t)
    np.testing.assert_allclose(out.points(), Trip("a", fixes, Direction.UPSTREAM).points(), atol=1e-9, rtol=0)


def test_hermite_is_exact_for_constant_velocity_between_grid_points():
    fixes = track("a", [10.0, 70.0, 130.0], 0.0, 3.0, 50.0)
    out = hermite_resample(Trip("a", fixes, Direction.UPSTREAM), dt=60.0)
    np.testing.assert_array_equal(out.times(), [60.0, 120.0])
    np.testing.assert_allclose(out.points(), [[180.0, 50.0], [360.0, 50.0]], atol=1e-9, rtol=0)
    assert out.dt == 60.0


def test_hermite_skips_long_gaps():
    fixes = track("a", [0.0, 60.0, 300.0, 360.0], 0.0, 3.0, 50.0)
    out = hermite_resample(Trip("a", fixes, Direction.UPSTREAM), dt=60.0, max_gap=120.0)
    np.testing.assert_array_equal(out.times(), [0.0, 60.0, 300.0, 360.0])


def test_hermite_gap_boundary():
    kept = track("a", [0.0, 60.0, 180.0, 240.0], 0.0, 3.0, 50.0)
    out = hermite_resample(Trip("a", kept, Direction.UPSTREAM), dt=60.0, max_gap=120.0)
    np.testing.assert_array_equal(out.times(), [0.0, 60.0, 120.0, 180.0, 240.0])

    skipped = track("a", [0.0, 60.0, 181.0, 240.0], 0.0, 3.0, 50.0)
    out = hermite_resample(Trip("a", skipped, Direction.UPSTREAM), dt=60.0, max_gap=120.0)
    np.testing.assert_array_equal(out.times(), [0.0, 60.0, 240.0])


def test_hermite_midpoint_of_resting_endpoints():
    fixes = [
        RawFix("a", 0.0, 0.0, 0.0, vx=0.0, vy=0.0),
        RawFix("a", 120.0, 100.0, 0.0, vx=0.0, vy=0.0),
    ]
    out = hermite_resample(Trip("a", fixes, Direction.UPSTREAM), dt=60.0)
    np.testing.assert_allclose(out.points()[1], [50.0, 0.0], atol=1e-12)


def test_hermite_is_c1_at_interior_fixes():
    rng = np.random.default_rng(2)
    times = [0.0, 60.0, 150.0, 240.0, 300.0]
    fixes = [
        RawFix("a", t, 3.0 * t + rng.normal(0.0, 20.0), 50.0 + rng.normal(0.0, 5.0), vx=rng.uniform(2.0, 4.0), vy=rng.normal(0.0, 0.2))
        for t in times
    ]
    h = 10.0
    out = hermite_resample(Trip("a", fixes, Direction.UPSTREAM), dt=h)
    p = out.points()
    grid = list(out.times())

    # four-point one-sided stencils are exact on each cubic piece
    for fix in fixes[1:-1]:
        i = grid.index(fix.t)
        right = (-11 * p[i] + 18 * p[i + 1] - 9 * p[i + 2] + 2 * p[i + 3]) / (6 * h)
        left = (11 * p[i] - 18 * p[i - 1] + 9 * p[i - 2] - 2 * p[i - 3]) / (6 * h)
        np.testing.assert_allclose(right, [fix.vx, fix.vy], atol=1e-6)
        np.testing.assert_allclose(left, [fix.vx, fix.vy], atol=1e-6)
        np.testing.assert_allclose(out.velocities()[i], [fix.vx, fix.vy], atol=1e-9)


def test_hermite_needs_two_fixes():
    with pytest.raises(TooShort):
        hermite_resample(Trip("a", track("a", [0.0], 0.0, 3.0, 50.0), Direction.UPSTREAM), dt=60.0)


def test_resampled_velocities_come_from_the_spline():
    fixes = track("a", [0.0, 60.0, 120.0], 0.0, 3.0, 50.0)
    out = hermite_resample(Trip("a", fixes, Direction.UPSTREAM), dt=30.0)
    np.testing.assert_allclose(out.velocities(), np.tile([3.0, 0.0], (5, 1)), atol=1e-9)


# ----------------------------------------------------------------------
# neighbor selection
# ----------------------------------------------------------------------

def test_neighbor_window_matches_brute_force():
    g = straight_fairway(20000.0)
    cfg = PipelineConfig()
    rng = np.random.default_rng(0)
    checked = 0
    for trial in range(200):
        direction = Direction.UPSTREAM if trial % 2 == 0 else Direction.DOWNSTREAM
        tx = rng.uniform(4000.0, 16000.0)
        target = Trip("tgt", [RawFix("tgt", 0.0, tx, 75.0, direction)], direction, dt=60.0)
        xs = tx + rng.uniform(-3000.0, 3000.0, size=50)
        ys = rng.uniform(0.0, 150.0, size=50)
        others = [
            Trip(f"o{j}", [RawFix(f"o{j}", 0.0, x, y)], Direction.UPSTREAM, dt=60.0)
            for j, (x, y) in enumerate(zip(xs, ys))
        ]

        selected = select_neighbors(target, others, 0.0, g, cfg)

        offsets = direction.sign * (xs - tx) / 1000.0
        expected = {f"o{j}#0" for j, off in enumerate(offsets) if -0.75 <= off <= 1.5}
        assert set(selected) == expected
        checked += len(xs)
    assert checked == 10_000


def test_neighbor_selection_ignores_agent_names():
    g = straight_fairway(20000.0)
    rng = np.random.default_rng(5)
    xs = 8000.0 + rng.uniform(-3000.0, 3000.0, size=40)
    ys = rng.uniform(0.0, 150.0, size=40)
    names = [f"o{j}" for j in range(40)]
    renamed = dict(zip(names, rng.permutation([f"vessel-{j:03d}" for j in range(40)])))

    def pick(target_id, ids):
        target = Trip(target_id, [RawFix(target_id, 0.0, 8000.0, 75.0)], Direction.UPSTREAM, dt=60.0)
        others = [Trip(a, [RawFix(a, 0.0, x, y)], Direction.UPSTREAM, dt=60.0) for a, x, y in zip(ids, xs, ys)]
        return select_neighbors(target, others, 0.0, g)

    original = pick("tgt", names)
    relabeled = pick("zz-target", [renamed[a] for a in names])
    assert original
    assert relabeled == {f"{renamed[key.split('#')[0]]}#0": state for key, state in original.items()}


def test_neighbor_selection_ignores_same_agent_and_missing_steps():
    g = straight_fairway()
    target = Trip("a", [RawFix("a", 60.0, 1000.0, 50.0)], Direction.UPSTREAM, dt=60.0)
    same_agent = Trip("a", [RawFix("a", 60.0, 1100.0, 50.0)], Direction.UPSTREAM, index=1, dt=60.0)
    off_grid = Trip("b", [RawFix("b", 120.0, 1100.0, 50.0)], Direction.UPSTREAM, dt=60.0)
    assert select_neighbors(target, [same_agent, off_grid], 60.0, g) == {}


# ----------------------------------------------------------------------
# interactions and windowing
# ----------------------------------------------------------------------

def make_sample(target_km, neighbors, t_obs=2, n=2) -> SequenceSample:
    size = t_obs + n + 1
    return SequenceSample(
        target_id="t#0",
        agent_id="t",
        start_t=0.0,
        dt=60.0,
        t_obs=t_obs,
        n=n,
        target_km=list(target_km),
        target_f=[50.0] * size,
        target_xy=[(k * 1000.0, 50.0) for k in target_km],
        target_v=[(1.0, 0.0)] * size,
        neighbors=neighbors,
        context=[150.0, 0.0] * 5,
    )


def test_detect_encounter_and_overtaking():
    target_km = [0.0, 0.1, 0.2, 0.3, 0.4]
    oncoming = NeighborTrack(other_id="d#0", direction=Direction.DOWNSTREAM, km=[1.0, 0.8, 0.6, 0.2, 0.0], f=[90.0] * 5)
    overtaker = NeighborTrack(other_id="u#0", direction=Direction.UPSTREAM, km=[-0.3, -0.1, 0.1, 0.25, 0.4], f=[20.0] * 5)
    sample = make_sample(target_km, [oncoming, overtaker])
    assert detect_interactions(sample) == [
        Interaction(other_id="d#0", kind="encounter", step=1),
        Interaction(other_id="u#0", kind="overtaking", step=2),
    ]


def test_no_interaction_when_offset_keeps_sign_or_is_unobserved():
    target_km = [0.0, 0.1, 0.2, 0.3, 0.4]
    ahead = NeighborTrack(other_id="d#0", direction=Direction.DOWNSTREAM, km=[1.0, 0.9, 0.8, 0.7, 0.6], f=[90.0] * 5)
    gap = NeighborTrack(other_id="e#0", direction=Direction.DOWNSTREAM, km=[1.0, 0.8, 0.6, None, 0.0], f=[90.0, 90.0, 90.0, None, 90.0])
    assert detect_interactions(make_sample(target_km, [ahead, gap])) == []


def test_sample_rejects_wrong_lengths():
    with pytest.raises(ValueError):
        make_sample([0.0, 0.1, 0.2], [])


def test_encounter_sample_extracted_end_to_end():
    g = straight_fairway()
    cfg = PipelineConfig()
    samples = run_pipeline(encounter_fixes(), g, cfg, workers=1)

    # meeting at t = 4000 / 7 s, between grid positions 9 and 10 of the first window
    assert len(samples) == 1
    sample = samples[0]
    assert sample.target_id == "up#0"
    assert sample.start_t == 0.0
    assert len(sample.target_km) == cfg.t_obs + cfg.n + 1
    assert sample.interactions == [Interaction(other_id="down#0", kind="encounter", step=5)]
    np.testing.assert_allclose(sample.target_f, 50.0, atol=1e-9)
    np.testing.assert_allclose(np.diff(sample.target_km), 0.18, atol=1e-9)

    report = validate_sample(sample, cfg, g)
    assert report["valid"], report["errors"]


def test_pipeline_is_independent_of_worker_count():
    g = straight_fairway()
    fixes = encounter_fixes() + track("up2", np.arange(0.0, 1201.0, 60.0), 500.0, 2.5, 40.0)
    one = run_pipeline(fixes, g, workers=1)
    four = run_pipeline(fixes, g, workers=4)
    assert [s.model_dump() for s in one] == [s.model_dump() for s in four]


def test_validator_flags_tampered_annotations():
    g = straight_fairway()
    cfg = PipelineConfig()
    (sample,) = run_pipeline(encounter_fixes(), g, cfg, workers=1)
    tampered = sample.model_copy(update={"interactions": []})
    report = validate_sample(tampered, cfg, g)
    assert not report["valid"]
    assert any("interaction" in e for e in report["errors"])


def test_validator_window_follows_travel_direction():
    cfg = PipelineConfig(t_obs=2, n=2)
    target_km = [5.0, 4.9, 4.8, 4.7, 4.6]
    # travelling downstream: lower km lies ahead
    ahead = NeighborTrack(other_id="a#0", direction=Direction.UPSTREAM, km=[k - 1.2 for k in target_km], f=[20.0] * 5)
    behind = NeighborTrack(other_id="b#0", direction=Direction.UPSTREAM, km=[k + 1.2 for k in target_km], f=[20.0] * 5)
    sample = make_sample(target_km, [ahead, behind]).model_copy(update={"direction": Direction.DOWNSTREAM})

    errors = validate_sample(sample, cfg)["errors"]
    window_errors = [e for e in errors if "outside selection window" in e]
    assert len(window_errors) == 5
    assert all(e.startswith("neighbor b#0") for e in window_errors)


# ----------------------------------------------------------------------
# dataset assembly
# ----------------------------------------------------------------------

def test_heading_frame_round_trip():
    rng = np.random.default_rng(1)
    xy = np.cumsum(rng.normal(size=(8, 2)) * 50.0, axis=0)
    heading = 0.7
    lateral, longitudinal = heading_dislocations(xy, heading)
    np.testing.assert_allclose(heading_to_cartesian(lateral, longitudinal, heading), np.diff(xy, axis=0), atol=1e-9)


def test_heading_frame_forward_motion_is_longitudinal():
    xy = np.array([[0.0, 0.0], [0.0, 10.0]])
    lateral, longitudinal = heading_dislocations(xy, np.pi / 2)
    np.testing.assert_allclose([lateral[0], longitudinal[0]], [0.0, 10.0], atol=1e-12)


def test_dataset_labels_from_samples():
    g = straight_fairway()
    cfg = PipelineConfig()
    samples = run_pipeline(encounter_fixes(), g, cfg, workers=1)
    codec = LabelCodec.uniform(21, (-15.0, 15.0), 41, (0.0, 200.0))

    nav = TrajectoryDataset.from_samples(samples, codec, FeatureFrame.NAVIGATION)
    heading = TrajectoryDataset.from_samples(samples, codec, FeatureFrame.HEADING)
    assert nav.obs_x.shape == (1, cfg.t_obs) and nav.fut_y.shape == (1, cfg.n)
    assert nav.context.shape == (1, 2 * cfg.context_count)
    # straight fairway, straight motion: both frames see the same dislocations
    np.testing.assert_array_equal(nav.fut_x, heading.fut_x)
    np.testing.assert_array_equal(nav.fut_y, heading.fut_y)
    assert not nav.has_social


def test_trip_split_keeps_trips_together():
    groups = [f"trip{i // 4}" for i in range(40)]
    train_idx, test_idx = trip_split_indices(groups, test_size=0.3, seed=3)
    assert set(train_idx).isdisjoint(test_idx)
    assert len(train_idx) + len(test_idx) == 40
    assert {groups[i] for i in train_idx}.isdisjoint({groups[i] for i in test_idx})

    again = trip_split_indices(groups, test_size=0.3, seed=3)
    np.testing.assert_array_equal(again[1], test_idx)


def test_split_needs_two_trips():
    with pytest.raises(ValueError):
        trip_split_indices(["a"] * 5)


def test_split_by_trip_on_dataset():
    g = straight_fairway()
    times = np.arange(0.0, 1201.0, 60.0)
    fixes = encounter_fixes() + track("up2", times, 700.0, 3.0, 30.0)
    samples = run_pipeline(fixes, g, workers=1)
    dataset = TrajectoryDataset.from_samples(samples, LabelCodec.uniform(21, (-15.0, 15.0), 41, (0.0, 200.0)))
    train, test = split_by_trip(dataset, test_size=0.5, seed=0)
    assert len(train) + len(test) == len(dataset)
    assert set(train.groups).isdisjoint(test.groups)
