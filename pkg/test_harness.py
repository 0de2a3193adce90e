#!/usr/bin/env python3
"""
Tests for training, evaluation metrics, ablation runs and their artifacts.

Usage:
    uv run pytest test_harness.py
"""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from main import build_parser, load_model_config
from src.data.collector import DatasetCollector
from src.data.dataset import TrajectoryDataset
from src.data.pipeline import Direction, RawFix, run_pipeline
from src.data.social_tensor import GridSpec, build
from src.data.synthetic import ScenarioConfig, generate, label_interactions
from src.eval.ablation import (
    config_at_resolution,
    encounter_from_annotations,
    resolution_sweep,
    run_ablation,
    summarize,
    variant_dataset,
)
from src.eval.evaluator import PredictionRecord, TrajectoryEvaluator, rollout, write_predictions, write_report
from src.eval.metrics import MetricsCalculator
from src.eval.report_generator import ReportGenerator
from src.eval.trainer import check_compatible, train
from src.eval.visualizer import TrajectoryVisualizer
from src.model.config import ModelConfig, Variant
from src.model.transformer import build_variant
from src.navigation.codec import DislocationLabel, LabelCodec
from src.navigation.geometry import FairwayGeometry, NavFrameState
from src.utils.errors import ManifestMismatch, VariantMismatch


def tiny_config(variant: Variant = Variant.SOSP_CT, **overrides) -> ModelConfig:
    params = dict(
        variant=variant,
        d=8,
        heads=2,
        d_ff=16,
        t_obs=3,
        n=3,
        n_lateral=5,
        n_longitudinal=5,
        context_count=2,
        grid=GridSpec(W=3, L=4),
        batch_size=16,
    )
    params.update(overrides)
    return ModelConfig(**params)


def straight_fairway(length: float = 10000.0) -> FairwayGeometry:
    return FairwayGeometry(
        centerline=np.array([[0.0, 75.0], [length, 75.0]]),
        right_border=np.array([[0.0, 0.0], [length, 0.0]]),
        left_border=np.array([[0.0, 150.0], [length, 150.0]]),
    )


def straight_encounters():
    """Two upstream vessels at 3 m/s meeting one downstream vessel; 180 m per minute."""
    times = np.arange(0.0, 1201.0, 60.0)
    fixes = []
    for agent_id, x0, lane, speed, direction in (
        ("up", 1000.0, 50.0, 3.0, Direction.UPSTREAM),
        ("up2", 700.0, 30.0, 3.0, Direction.UPSTREAM),
        ("down", 5000.0, 90.0, -4.0, Direction.DOWNSTREAM),
    ):
        fixes += [RawFix(agent_id, float(t), x0 + speed * t, lane, direction, vx=speed, vy=0.0) for t in times]
    return fixes


@pytest.fixture(scope="module")
def synthetic():
    cfg = tiny_config()
    scenario = ScenarioConfig(seed=1, duration=900.0, position_noise=0.0, speed_noise=0.0)
    stream = generate(scenario, 12)
    samples = run_pipeline(stream.fixes, stream.geometry, cfg.pipeline, workers=1)
    encounter = encounter_from_annotations(samples, label_interactions(samples, stream.events))
    return cfg, stream, samples, encounter


# ----------------------------------------------------------------------
# metrics
# ----------------------------------------------------------------------

def test_identical_tracks_have_zero_error():
    track = np.cumsum(np.full((5, 2), 30.0), axis=0)
    assert MetricsCalculator.ade_fde(track, track) == {"ade": 0.0, "fde": 0.0}


def test_constant_offset_gives_pythagorean_error():
    track = np.cumsum(np.full((5, 2), 30.0), axis=0)
    scores = MetricsCalculator.ade_fde(track + [3.0, 4.0], track)
    assert scores["ade"] == pytest.approx(5.0, abs=1e-12)
    assert scores["fde"] == pytest.approx(5.0, abs=1e-12)


def test_report_aggregates_are_recomputable():
    rng = np.random.default_rng(0)
    truths = [rng.normal(size=(5, 2)) * 100.0 for _ in range(40)]
    predictions = [t + rng.normal(size=(5, 2)) * 20.0 for t in truths]
    encounter = np.arange(40) % 3 == 0
    report = MetricsCalculator.build_report(predictions, truths, [str(i) for i in range(40)], encounter, dt=60.0)

    np.testing.assert_allclose(report.ade, report.fde_by_step.mean(axis=1), atol=1e-12)
    np.testing.assert_array_equal(report.fde, report.fde_by_step[:, -1])
    assert report.check_consistency() == []

    strata = report.strata()
    assert len(strata["encounter"]) + len(strata["no_encounter"]) == 40
    assert len(strata["encounter"]) == int(encounter.sum())

    quantiles = list(report.summary()["all"]["fde_quantiles"].values())
    assert quantiles == sorted(quantiles)


def test_horizon_curve_in_minutes():
    truths = [np.zeros((6, 2))] * 3
    predictions = [np.tile([[0.0, 10.0]], (6, 1)) * np.arange(1, 7)[:, None]] * 3
    report = MetricsCalculator.build_report(predictions, truths, ["a", "b", "c"], dt=30.0)
    curve = report.horizon_curve()
    np.testing.assert_allclose(curve["minutes"], [0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
    np.testing.assert_allclose(curve["fde_mean"], [10.0, 20.0, 30.0, 40.0, 50.0, 60.0])
    np.testing.assert_allclose(curve["fde_std"], 0.0)


def test_empty_stratum_is_well_defined():
    report = MetricsCalculator.build_report([np.zeros((3, 2))], [np.ones((3, 2))], ["a"])
    summary = report.summary()
    assert summary["encounter"]["fde"]["count"] == 0
    assert np.isnan(summary["encounter"]["fde"]["mean"])
    assert report.strata()["encounter"].horizon_curve()["fde_mean"].isna().all()


def test_fde_distribution_shares():
    shares = MetricsCalculator.fde_distribution(np.array([10.0, 50.0, 80.0, 150.0]))
    assert shares == {"le_50m": 0.5, "gt_100m": 0.25}


def test_report_rejects_bad_input():
    with pytest.raises(ValueError):
        MetricsCalculator.build_report([], [], [])
    with pytest.raises(ValueError):
        MetricsCalculator.step_errors(np.zeros((3, 2)), np.zeros((4, 2)))


def test_consistency_check_flags_tampering():
    report = MetricsCalculator.build_report([np.zeros((3, 2))] * 2, [np.ones((3, 2))] * 2, ["a", "b"])
    report.fde_by_step[0, 1] = np.nan
    assert report.check_consistency()


# ----------------------------------------------------------------------
# evaluation
# ----------------------------------------------------------------------

def test_ground_truth_labels_reconstruct_exactly():
    g = straight_fairway()
    cfg = tiny_config(Variant.SP_CT, n_lateral=5, lateral_range=(-15.0, 15.0), n_longitudinal=5, longitudinal_range=(0.0, 200.0))
    samples = run_pipeline(straight_encounters(), g, cfg.pipeline, workers=1)
    dataset = variant_dataset(samples, cfg, Variant.SP_CT)
    evaluator = TrajectoryEvaluator(build_variant(cfg), workers=1)

    # 180 m / step and zero lateral motion sit on bin centers
    for i in range(len(dataset)):
        xy, clamped = evaluator.to_metric(dataset, i, dataset.fut_x[i], dataset.fut_y[i], g)
        assert not clamped
        scores = MetricsCalculator.ade_fde(xy, dataset.future_xy(i))
        assert scores["ade"] == pytest.approx(0.0, abs=1e-9)
        assert scores["fde"] == pytest.approx(0.0, abs=1e-9)


def test_heading_frame_reconstruction_on_straight_motion():
    g = straight_fairway()
    cfg = tiny_config(Variant.CT)
    samples = run_pipeline(straight_encounters(), g, cfg.pipeline, workers=1)
    dataset = variant_dataset(samples, cfg, Variant.CT)
    evaluator = TrajectoryEvaluator(build_variant(cfg), workers=1)
    xy, _ = evaluator.to_metric(dataset, 0, dataset.fut_x[0], dataset.fut_y[0], None)
    np.testing.assert_allclose(xy, dataset.future_xy(0), atol=1e-9)


def test_rollout_clamps_at_the_end_of_the_fairway():
    g = straight_fairway()
    codec = LabelCodec.uniform(5, (-15.0, 15.0), 5, (0.0, 200.0))
    labels = [DislocationLabel(x=2, y=4)] * 3
    xy, clamped = rollout(NavFrameState(km=9.9, f=50.0), labels, codec, g)
    assert clamped
    assert np.all(np.isfinite(xy))
    assert xy[:, 0].max() <= 10000.0 + 1e-6


def test_evaluate_untrained_model(synthetic):
    cfg, stream, samples, encounter = synthetic
    dataset = variant_dataset(samples, cfg, Variant.SOSP_CT)
    report, records = TrajectoryEvaluator(build_variant(cfg), workers=2).evaluate(dataset, stream.geometry, encounter)

    assert len(report) == len(records) == len(dataset)
    assert report.check_consistency() == []
    assert report.fde_by_step.shape == (len(dataset), cfg.n)
    np.testing.assert_array_equal(report.encounter, encounter)
    assert {"clamped", "label_accuracy"} <= set(report.metadata)
    assert all(len(r.predicted_xy) == cfg.n for r in records)


def test_parallel_decoding_matches_serial(synthetic):
    cfg, stream, samples, _ = synthetic
    dataset = variant_dataset(samples, cfg, Variant.SOSP_CT)
    model = build_variant(cfg)
    serial = TrajectoryEvaluator(model, workers=1).predict_labels(dataset)
    parallel = TrajectoryEvaluator(model, workers=4).predict_labels(dataset)
    np.testing.assert_array_equal(serial[0], parallel[0])
    np.testing.assert_array_equal(serial[1], parallel[1])


def test_manifest_mismatch_on_codec_frame_and_social(synthetic):
    cfg, stream, samples, _ = synthetic
    evaluator = TrajectoryEvaluator(build_variant(cfg), workers=1)

    other_codec = TrajectoryDataset.from_samples(samples, LabelCodec.uniform(7, (-15.0, 15.0), 5, (0.0, 200.0)), grid=cfg.grid)
    with pytest.raises(ManifestMismatch):
        evaluator.evaluate(other_codec, stream.geometry)

    no_social = variant_dataset(samples, cfg, Variant.SP_CT)
    with pytest.raises(ManifestMismatch):
        evaluator.evaluate(no_social, stream.geometry)

    heading = variant_dataset(samples, cfg, Variant.CT)
    with pytest.raises(ManifestMismatch):
        TrajectoryEvaluator(build_variant(cfg, Variant.SP_CT), workers=1).evaluate(heading, stream.geometry)


def test_written_artifacts(synthetic, tmp_path):
    cfg, stream, samples, encounter = synthetic
    dataset = variant_dataset(samples, cfg, Variant.SOSP_CT)
    report, records = TrajectoryEvaluator(build_variant(cfg), workers=1).evaluate(dataset, stream.geometry, encounter)

    paths = write_report(report, tmp_path)
    metrics = pd.read_csv(paths["metrics"])
    assert len(metrics) == len(report)
    assert list(metrics.columns[-cfg.n:]) == [f"fde_step_{k}" for k in range(1, cfg.n + 1)]
    horizon = pd.read_csv(paths["horizon"])
    assert list(horizon["step"]) == list(range(1, cfg.n + 1))
    summary = json.loads(paths["summary"].read_text())
    assert summary["variant"] == "sosp-ct"

    path = write_predictions(records, tmp_path / "predictions.jsonl")
    lines = path.read_text().splitlines()
    assert len(lines) == len(records)
    assert PredictionRecord.model_validate_json(lines[0]) == records[0]


# ----------------------------------------------------------------------
# training
# ----------------------------------------------------------------------

def test_train_records_history_and_learns_uncertainties(synthetic):
    cfg, _, samples, _ = synthetic
    result = train(variant_dataset(samples, cfg, Variant.SOSP_CT), cfg, epochs=2, max_steps=4, show_progress=False)
    history = result.history
    assert list(history.columns) == ["epoch", "steps", "loss", "loss_x", "loss_y", "accuracy", "sigma_x", "sigma_y"]
    assert np.all(np.isfinite(history[["loss", "loss_x", "loss_y"]].to_numpy()))
    assert result.steps == 4
    assert history["sigma_x"].iloc[-1] != 1.0
    assert history["sigma_y"].iloc[-1] != 1.0


def test_training_is_deterministic(synthetic, tmp_path):
    cfg, _, samples, _ = synthetic
    dataset = variant_dataset(samples, cfg, Variant.SOSP_CT)
    a = train(dataset, cfg, epochs=1, max_steps=3, seed=4, checkpoint_dir=tmp_path / "a", deterministic=True, show_progress=False)
    b = train(dataset, cfg, epochs=1, max_steps=3, seed=4, checkpoint_dir=tmp_path / "b", deterministic=True, show_progress=False)
    assert (tmp_path / "a" / "weights.bin").read_bytes() == (tmp_path / "b" / "weights.bin").read_bytes()
    pd.testing.assert_frame_equal(a.history, b.history)


def test_checkpoint_evaluation_matches_in_memory(synthetic, tmp_path):
    cfg, stream, samples, _ = synthetic
    dataset = variant_dataset(samples, cfg, Variant.SP_CT)
    run_cfg = cfg.model_copy(update={"variant": Variant.SP_CT})
    result = train(dataset, run_cfg, epochs=1, max_steps=2, checkpoint_dir=tmp_path / "ckpt", show_progress=False)

    in_memory, _ = TrajectoryEvaluator(result.model, workers=1).evaluate(dataset, stream.geometry)
    restored, _ = TrajectoryEvaluator.from_checkpoint(tmp_path / "ckpt", workers=1).evaluate(dataset, stream.geometry)
    np.testing.assert_array_equal(in_memory.fde_by_step, restored.fde_by_step)


def test_train_rejects_incompatible_data(synthetic):
    cfg, _, samples, _ = synthetic
    nav = variant_dataset(samples, cfg, Variant.SP_CT)
    with pytest.raises(VariantMismatch):
        check_compatible(nav, tiny_config(Variant.CT))
    with pytest.raises(VariantMismatch):
        check_compatible(nav, tiny_config(Variant.SOSP_CT))
    with pytest.raises(ValueError):
        check_compatible(nav, tiny_config(Variant.SP_CT, n_lateral=7))
    with pytest.raises(ValueError):
        train(nav.subset([]), tiny_config(Variant.SP_CT), show_progress=False)


# ----------------------------------------------------------------------
# ablation
# ----------------------------------------------------------------------

def test_annotations_mark_encounter_samples(synthetic):
    _, _, samples, encounter = synthetic
    assert encounter.dtype == bool and len(encounter) == len(samples)
    assert encounter.any()


def test_ablation_table_contract_and_determinism(synthetic, tmp_path):
    cfg, stream, samples, encounter = synthetic
    kwargs = dict(seeds=(0, 1), epochs=1, max_steps=2, encounter=encounter, deterministic=True)

    first = run_ablation(samples, cfg, stream.geometry, output_dir=tmp_path, **kwargs)
    second = run_ablation(samples, cfg, stream.geometry, **kwargs)

    table = first.table
    assert len(table) == 3 * 2
    assert sorted(zip(table["variant"], table["seed"])) == sorted(
        (v, s) for v in ("ct", "sp-ct", "sosp-ct") for s in (0, 1)
    )
    pd.testing.assert_frame_equal(table, second.table)
    pd.testing.assert_frame_equal(first.curves, second.curves)

    # identical test split for every variant of one seed
    for seed in (0, 1):
        counts = table[table["seed"] == seed][["n_test", "n_encounter"]].drop_duplicates()
        assert len(counts) == 1

    assert set(first.curves["stratum"]) == {"all", "encounter", "no_encounter"}
    assert (tmp_path / "ablation_table.csv").exists()
    assert (tmp_path / "sosp-ct-seed0" / "checkpoint" / "manifest.json").exists()

    summary = summarize(table)
    assert list(summary["variant"]) == ["ct", "sp-ct", "sosp-ct"]
    assert list(summary["seeds"]) == [2, 2, 2]


def test_figures_and_markdown_report(synthetic, tmp_path):
    cfg, stream, samples, encounter = synthetic
    result = run_ablation(samples, cfg, stream.geometry, seeds=(0,), epochs=1, max_steps=1, encounter=encounter)
    reports = {variant: result.reports[(variant, 0)] for variant in ("ct", "sp-ct", "sosp-ct")}
    histories = {variant: result.histories[(variant, 0)] for variant in ("ct", "sp-ct", "sosp-ct")}

    visualizer = TrajectoryVisualizer(tmp_path)
    figures = visualizer.generate_all_visualizations(result.curves, reports, histories)
    assert all(path.exists() for path in figures.values())
    assert (tmp_path / "fde_horizon.csv").exists()

    dataset = variant_dataset(samples, cfg, Variant.SOSP_CT)
    _, records = TrajectoryEvaluator(build_variant(cfg), workers=1).evaluate(dataset, stream.geometry)
    example = visualizer.plot_prediction_example(
        stream.geometry, {"sosp-ct": records[0]}, np.asarray(samples[0].target_xy[: cfg.t_obs + 1])
    )
    occupancy = visualizer.plot_occupancy(build(samples[0], cfg.grid))
    assert example.exists() and occupancy.exists()

    path = ReportGenerator(tmp_path).generate_markdown_report(result.table, summarize(result.table), figures)
    text = path.read_text()
    for variant in ("ct", "sp-ct", "sosp-ct"):
        assert f"| {variant} |" in text


def test_resolution_config_scales_label_ranges():
    cfg = tiny_config()
    fine = config_at_resolution(cfg, 30.0, 6)
    assert (fine.t_obs, fine.n, fine.dt) == (6, 6, 30.0)
    assert fine.pipeline.dt == 30.0 and fine.pipeline.t_obs == 6
    assert fine.lateral_range == (-7.5, 7.5)
    assert fine.longitudinal_range == (0.0, 100.0)


def test_resolution_sweep_emits_curves(synthetic):
    cfg, stream, _, _ = synthetic
    curves = resolution_sweep(
        stream.fixes,
        stream.geometry,
        cfg,
        resolutions=((60.0, 3),),
        seeds=(0,),
        epochs=1,
        events=stream.events,
        max_steps=1,
    )
    assert set(curves["dt"]) == {60.0}
    assert list(curves.columns[:4]) == ["dt", "variant", "seed", "stratum"]
    assert set(curves["variant"]) == {"sosp-ct"}


def test_preprocess_flags_override_the_window(tmp_path):
    stream = generate(ScenarioConfig(seed=3), 20)
    collector = DatasetCollector(tmp_path)
    collector.save_fixes(stream.fixes)
    collector.save_geometry(stream.geometry)

    args = build_parser().parse_args(
        ["preprocess", "--data", str(tmp_path), "--dt", "90", "--tobs", "3", "--horizon", "3", "--output", "coarse.jsonl"]
    )
    assert (args.dt, args.tobs, args.horizon) == (90.0, 3, 3)
    args.func(args)

    samples = collector.load_samples("coarse.jsonl")
    assert samples
    assert {(s.dt, s.t_obs, s.n) for s in samples} == {(90.0, 3, 3)}


def test_preprocess_flags_default_to_the_config():
    args = build_parser().parse_args(["preprocess", "--data", "d"])
    cfg = load_model_config(args, dt=args.dt, t_obs=args.tobs, n=args.horizon)
    assert (cfg.pipeline.dt, cfg.pipeline.t_obs, cfg.pipeline.n) == (60.0, 5, 5)


@pytest.mark.slow
def test_social_context_wins_on_encounters():
    scenario = ScenarioConfig.from_json(Path("data/scenario.json"))
    cfg = ModelConfig.from_file(Path("data/model.cfg"))
    stream = generate(scenario, 700)
    samples = run_pipeline(stream.fixes, stream.geometry, cfg.pipeline, workers=1)
    assert len(samples) >= 2000
    encounter = encounter_from_annotations(samples, label_interactions(samples, stream.events))

    result = run_ablation(samples, cfg, stream.geometry, seeds=(0, 1, 2), epochs=3, encounter=encounter, deterministic=True)

    summary = summarize(result.table).set_index("variant")
    assert list(summary["seeds"]) == [3, 3, 3]
    enc = summary["enc_fde_mean_avg"]
    assert enc["sosp-ct"] <= 0.9 * enc["sp-ct"]
    # the synthetic fairway bends twice
    assert summary.loc["sp-ct", "fde_mean_avg"] <= summary.loc["ct", "fde_mean_avg"]

    curves = result.curves[result.curves["stratum"] == "encounter"]
    by_step = curves.groupby(["variant", "step"])["fde_mean"].mean().unstack("step")
    advantage = by_step.loc["ct"] - by_step.loc["sosp-ct"]
    assert advantage.iloc[-1] > advantage.iloc[0]
