#!/usr/bin/env python3
"""
Tests for the target-centric occupancy grids.

Usage:
    uv run pytest test_social_tensor.py
"""

import numpy as np
import pandas as pd
import pytest

from src.data.pipeline import Direction, NeighborTrack, SequenceSample
from src.data.social_tensor import GridEntry, GridSpec, SocialTensor, build, cell_of, collide, stack

T_OBS = 3
N = 3
POSITIONS = T_OBS + N + 1
TARGET_KM = [1.0 + 0.1 * i for i in range(POSITIONS)]
TARGET_F = [50.0] * POSITIONS


def neighbor(other_id, lat, lon, km=TARGET_KM, f=TARGET_F, direction=Direction.DOWNSTREAM):
    """Track from target-relative offsets (m); None marks an unobserved position."""
    return NeighborTrack(
        other_id=other_id,
        direction=direction,
        km=[None if b is None else k + b / 1000.0 for k, b in zip(km, lon)],
        f=[None if a is None else g + a for g, a in zip(f, lat)],
    )


def sample_with(neighbors, km=TARGET_KM, f=TARGET_F):
    return SequenceSample(
        target_id="ta#0",
        agent_id="ta",
        start_t=0.0,
        dt=60.0,
        t_obs=T_OBS,
        n=N,
        target_km=list(km),
        target_f=list(f),
        target_xy=[(1000.0 + 100.0 * i, 50.0) for i in range(POSITIONS)],
        target_v=[(100.0 / 60.0, 0.0)] * POSITIONS,
        neighbors=neighbors,
    )


def head_on(other_id="oncoming", lat=20.0, km=TARGET_KM, f=TARGET_F):
    return neighbor(other_id, [lat] * POSITIONS, [1010.0 - 100.0 * i for i in range(POSITIONS)], km, f)


def test_origin_cell_is_centered():
    spec = GridSpec()
    assert (spec.l_ahead, spec.l_behind) == (20, 10)
    assert cell_of((0.0, 0.0), spec) == (2, 10)


@pytest.mark.parametrize(
    "rel, expected",
    [
        ((0.0, 1499.9), (2, 29)),
        ((0.0, 1500.0), None),
        ((0.0, -750.0), (2, 0)),
        ((0.0, -750.1), None),
        ((-62.4, 0.0), (0, 10)),
        ((-62.6, 0.0), None),
        ((62.4, 0.0), (4, 10)),
    ],
)
def test_cell_bounds(rel, expected):
    assert cell_of(rel, GridSpec()) == expected


def test_cell_of_matches_rectangle_scan():
    spec = GridSpec()
    rng = np.random.default_rng(3)
    offsets = np.column_stack([rng.uniform(-100, 100, 10000), rng.uniform(-1000, 1800, 10000)])

    for d_lat, d_lon in offsets:
        expected = None
        for w in range(spec.W):
            lat_lo = (w - spec.W / 2) * spec.lat_cell
            for l in range(spec.L):
                lon_lo = (l - spec.l_behind) * spec.lon_cell
                if lat_lo <= d_lat < lat_lo + spec.lat_cell and lon_lo <= d_lon < lon_lo + spec.lon_cell:
                    expected = (w, l)
        assert cell_of((d_lat, d_lon), spec) == expected


def test_empty_scene():
    tensor = build(sample_with([]), GridSpec())
    assert tensor.values.shape == (5, 30, T_OBS, 2)
    assert tensor.mask.shape == (5, 30, T_OBS)
    assert not tensor.mask.any()
    assert not tensor.values.any()


def test_head_on_neighbor_records_closing_rate():
    spec = GridSpec()
    tensor = build(sample_with([head_on()]), spec)

    assert tensor.occupied() == T_OBS
    for t in range(1, T_OBS + 1):
        w, l = cell_of((20.0, 1010.0 - 100.0 * t), spec)
        assert tensor.mask[w, l, t - 1]
        np.testing.assert_allclose(tensor.values[w, l, t - 1], [0.0, -100.0], atol=1e-9)


def test_values_are_zero_outside_the_mask():
    tensor = build(sample_with([head_on("a"), head_on("b", lat=-40.0)]), GridSpec())
    assert not tensor.values[~tensor.mask].any()
    assert np.all(np.isfinite(tensor.values[tensor.mask]))


def test_different_agents_share_a_cell_at_different_steps():
    spec = GridSpec()
    rel = (0.0, 310.0)
    early = neighbor("early", [rel[0], rel[0]] + [None] * 5, [rel[1], rel[1]] + [None] * 5)
    late = neighbor("late", [None, None, rel[0], rel[0], None, None, None], [None, None, rel[1], rel[1], None, None, None])
    tensor = build(sample_with([early, late]), spec)

    w, l = cell_of(rel, spec)
    assert tensor.mask[w, l].tolist() == [True, False, True]
    assert tensor.occupied() == 2


def test_collision_keeps_the_nearest_neighbor():
    spec = GridSpec()
    # both land in the cell covering 225..300 m ahead at step 1
    near = neighbor("near", [5.0] * POSITIONS, [260.0, 240.0] + [240.0] * 5)
    far = neighbor("far", [5.0] * POSITIONS, [300.0, 290.0] + [290.0] * 5)
    tensor = build(sample_with([far, near]), spec)

    w, l = cell_of((5.0, 240.0), spec)
    assert cell_of((5.0, 290.0), spec) == (w, l)
    np.testing.assert_allclose(tensor.values[w, l, 0], [0.0, -20.0], atol=1e-9)


def test_collide_rules():
    near = GridEntry(order=1, other_id="b", rel=(0.0, 120.0), value=(1.0, 1.0))
    far = GridEntry(order=0, other_id="a", rel=(0.0, 300.0), value=(2.0, 2.0))
    assert collide([far, near]) is near

    first = GridEntry(order=0, other_id="a", rel=(3.0, 4.0), value=(1.0, 0.0))
    second = GridEntry(order=1, other_id="b", rel=(4.0, 3.0), value=(0.0, 1.0))
    assert collide([second, first]) is first

    assert collide([near]) is near


def test_common_drift_leaves_the_tensor_unchanged():
    spec = GridSpec()
    neighbors = [head_on("a"), neighbor("b", [-30.0 + i for i in range(POSITIONS)], [-400.0 + 10.0 * i for i in range(POSITIONS)])]
    base = build(sample_with(neighbors), spec)

    km = [k + 0.25 * i for i, k in enumerate(TARGET_KM)]
    f = [v + 3.0 * i for i, v in enumerate(TARGET_F)]
    moved = [
        head_on("a", km=km, f=f),
        neighbor("b", [-30.0 + i for i in range(POSITIONS)], [-400.0 + 10.0 * i for i in range(POSITIONS)], km, f),
    ]
    drifted = build(sample_with(moved, km, f), spec)

    np.testing.assert_array_equal(drifted.mask, base.mask)
    np.testing.assert_allclose(drifted.values, base.values, atol=1e-6)


def test_missing_observation_only_affects_adjacent_slices():
    spec = GridSpec()
    full = build(sample_with([head_on()]), spec)

    gap = head_on()
    gap.km[2] = None
    gap.f[2] = None
    partial = build(sample_with([gap]), spec)

    np.testing.assert_array_equal(partial.mask[:, :, 0], full.mask[:, :, 0])
    np.testing.assert_array_equal(partial.values[:, :, 0], full.values[:, :, 0])
    assert not partial.mask[:, :, 1].any()
    assert not partial.mask[:, :, 2].any()


def test_dump_csv_lists_occupied_cells(tmp_path):
    tensor = build(sample_with([head_on("a"), head_on("b", lat=-40.0)]), GridSpec())
    frame = pd.read_csv(tensor.dump_csv(tmp_path / "grid.csv"))
    assert list(frame.columns) == ["step", "w", "l", "d_lat", "d_lon"]
    assert len(frame) == tensor.occupied()
    assert frame["step"].is_monotonic_increasing
    np.testing.assert_allclose(frame["d_lon"], -100.0, atol=1e-9)


def test_stack_batches_tensors():
    spec = GridSpec(W=3, L=4)
    values, mask = stack([SocialTensor.empty(spec, 2), SocialTensor.empty(spec, 2)])
    assert values.shape == (2, 3, 4, 2, 2)
    assert mask.shape == (2, 3, 4, 2)
