"""
Ablation and time-resolution studies.

Every variant of one seed trains and evaluates on the same trip-level split,
so differences in the comparison table come from the model alone.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.data.dataset import TrajectoryDataset, trip_split_indices
from src.data.pipeline import Interaction, RawFix, SequenceSample, run_pipeline
from src.data.synthetic import ScenarioEvent, label_interactions
from src.eval.config import EvalConfig
from src.eval.evaluator import TrajectoryEvaluator, write_report
from src.eval.metrics import EvalReport, MetricsCalculator
from src.eval.trainer import TrainResult, train
from src.model.config import ModelConfig, Variant
from src.navigation.geometry import FairwayGeometry
from src.utils.logger import get_logger

logger = get_logger(__name__)

ALL_VARIANTS: Tuple[Variant, ...] = (Variant.CT, Variant.SP_CT, Variant.SOSP_CT)


@dataclass
class AblationResult:
    """Comparison table, horizon curves and per-run artifacts of one study."""
    table: pd.DataFrame
    curves: pd.DataFrame
    reports: Dict[Tuple[str, int], EvalReport] = field(default_factory=dict)
    histories: Dict[Tuple[str, int], pd.DataFrame] = field(default_factory=dict)


def encounter_from_annotations(
    samples: Sequence[SequenceSample],
    annotations: Mapping[Tuple[str, float], List[Interaction]],
) -> np.ndarray:
    """Encounter flag per sample from (target trip id, start time) keyed annotations."""
    return np.array(
        [
            any(i.kind == "encounter" for i in annotations.get((s.target_id, s.start_t), []))
            for s in samples
        ],
        dtype=bool,
    )


def variant_dataset(samples: Sequence[SequenceSample], cfg: ModelConfig, variant: Variant) -> TrajectoryDataset:
    """Dataset in the feature frame (and with the social context) a variant consumes."""
    return TrajectoryDataset.from_samples(
        samples, cfg.codec(), variant.frame, cfg.grid if variant.social else None
    )


def _table_row(variant: Variant, seed: int, report: EvalReport, result: TrainResult) -> Dict[str, float]:
    encounter = report.strata()["encounter"]
    ade = MetricsCalculator.mean_std(report.ade)
    fde = MetricsCalculator.mean_std(report.fde)
    enc_ade = MetricsCalculator.mean_std(encounter.ade)
    enc_fde = MetricsCalculator.mean_std(encounter.fde)
    shares = MetricsCalculator.fde_distribution(report.fde)
    good, poor = list(shares.values())
    return {
        "variant": variant.value,
        "seed": seed,
        "n_test": len(report),
        "n_encounter": len(encounter),
        "ade_mean": ade.mean,
        "ade_std": ade.std,
        "fde_mean": fde.mean,
        "fde_std": fde.std,
        "enc_ade_mean": enc_ade.mean,
        "enc_ade_std": enc_ade.std,
        "enc_fde_mean": enc_fde.mean,
        "enc_fde_std": enc_fde.std,
        "fde_le_good": good,
        "fde_gt_poor": poor,
        "label_accuracy": report.metadata.get("label_accuracy", float("nan")),
        "final_loss": float(result.history["loss"].iloc[-1]),
    }


def _curve_rows(variant: Variant, seed: int, report: EvalReport) -> pd.DataFrame:
    parts = []
    for stratum, part in report.strata().items():
        curve = part.horizon_curve()
        curve.insert(0, "stratum", stratum)
        curve.insert(0, "seed", seed)
        curve.insert(0, "variant", variant.value)
        parts.append(curve)
    return pd.concat(parts, ignore_index=True)


def run_ablation(
    samples: Sequence[SequenceSample],
    cfg: ModelConfig,
    geometry: FairwayGeometry,
    seeds: Iterable[int] = (0, 1, 2),
    epochs: int = 10,
    variants: Sequence[Variant] = ALL_VARIANTS,
    test_size: float = 0.2,
    encounter: Optional[Sequence[bool]] = None,
    output_dir: Optional[Path] = None,
    max_steps: Optional[int] = None,
    deterministic: Optional[bool] = None,
    show_progress: bool = False,
) -> AblationResult:
    """
    Train and evaluate every variant for every seed.

    Args:
        samples: Preprocessed samples of all trips
        cfg: Shared hyperparameters; variant and seed are set per run
        geometry: Fairway geometry for navigation-frame reconstruction
        seeds: Split and initialization seeds
        epochs: Training epochs per run
        variants: Variants to compare
        test_size: Share of target trips held out
        encounter: Encounter flag per sample (default: detected interactions)
        output_dir: Write checkpoints and per-run reports here when given
        max_steps: Cap on optimizer steps per run
        deterministic: Force single-threaded BLAS
        show_progress: Render training progress bars

    Returns:
        AblationResult with one table row per (variant, seed)
    """
    samples = list(samples)
    flags = None if encounter is None else np.asarray(encounter, dtype=bool)
    if flags is not None and len(flags) != len(samples):
        raise ValueError(f"{len(flags)} encounter flags for {len(samples)} samples")

    datasets = {variant: variant_dataset(samples, cfg, variant) for variant in variants}
    groups = [s.target_id for s in samples]

    rows, curves = [], []
    reports: Dict[Tuple[str, int], EvalReport] = {}
    histories: Dict[Tuple[str, int], pd.DataFrame] = {}
    for seed in seeds:
        train_idx, test_idx = trip_split_indices(groups, test_size, seed)
        logger.info(f"Seed {seed}: {len(train_idx)} train / {len(test_idx)} test samples")
        test_flags = None if flags is None else flags[test_idx]

        for variant in variants:
            run_cfg = cfg.model_copy(update={"variant": variant, "seed": seed})
            data = datasets[variant]
            run_dir = None if output_dir is None else Path(output_dir) / f"{variant.value}-seed{seed}"
            result = train(
                data.subset(train_idx),
                run_cfg,
                epochs=epochs,
                checkpoint_dir=None if run_dir is None else run_dir / "checkpoint",
                deterministic=deterministic,
                max_steps=max_steps,
                show_progress=show_progress,
            )
            report, _ = TrajectoryEvaluator(result.model).evaluate(
                data.subset(test_idx), geometry, encounter=test_flags
            )
            if run_dir is not None:
                write_report(report, run_dir)
                result.history.to_csv(run_dir / "loss_history.csv", index=False)

            rows.append(_table_row(variant, seed, report, result))
            curves.append(_curve_rows(variant, seed, report))
            reports[(variant.value, seed)] = report
            histories[(variant.value, seed)] = result.history
            logger.info(
                f"{variant.value} seed {seed}: ADE {rows[-1]['ade_mean']:.2f} m, "
                f"FDE {rows[-1]['fde_mean']:.2f} m, encounter FDE {rows[-1]['enc_fde_mean']:.2f} m"
            )

    result = AblationResult(
        table=pd.DataFrame(rows),
        curves=pd.concat(curves, ignore_index=True),
        reports=reports,
        histories=histories,
    )
    if output_dir is not None:
        result.table.to_csv(Path(output_dir) / "ablation_table.csv", index=False)
        result.curves.to_csv(Path(output_dir) / "fde_horizon_curves.csv", index=False)
    return result


def summarize(table: pd.DataFrame) -> pd.DataFrame:
    """Seed-averaged comparison: one row per variant with mean and spread over seeds."""
    metrics = ["ade_mean", "fde_mean", "enc_ade_mean", "enc_fde_mean", "fde_le_good", "fde_gt_poor"]
    grouped = table.groupby("variant", sort=False)[metrics]
    summary = grouped.mean().add_suffix("_avg").join(grouped.std(ddof=0).add_suffix("_seed_std"))
    summary.insert(0, "seeds", table.groupby("variant", sort=False)["seed"].nunique())
    order = [v.value for v in ALL_VARIANTS if v.value in summary.index]
    return summary.loc[order].reset_index()


def config_at_resolution(cfg: ModelConfig, dt: float, steps: int) -> ModelConfig:
    """Same model at another time step; label ranges scale with the step length."""
    scale = dt / cfg.dt
    data = cfg.model_dump()
    data.update(
        dt=dt,
        t_obs=steps,
        n=steps,
        lateral_range=tuple(v * scale for v in cfg.lateral_range),
        longitudinal_range=tuple(v * scale for v in cfg.longitudinal_range),
    )
    return ModelConfig.model_validate(data)


def resolution_sweep(
    fixes: Sequence[RawFix],
    geometry: FairwayGeometry,
    cfg: ModelConfig,
    resolutions: Sequence[Tuple[float, int]] = EvalConfig.RESOLUTIONS,
    seeds: Iterable[int] = (0,),
    epochs: int = 10,
    events: Optional[Sequence[ScenarioEvent]] = None,
    variant: Variant = Variant.SOSP_CT,
    max_steps: Optional[int] = None,
    deterministic: Optional[bool] = None,
) -> pd.DataFrame:
    """
    Re-run preprocessing, training and evaluation at several time steps.

    Args:
        fixes: Raw fixes
        geometry: Fairway geometry
        cfg: Hyperparameters at the reference resolution
        resolutions: (dt seconds, observed = predicted steps) pairs
        seeds: Seeds per resolution
        epochs: Training epochs per run
        events: Generator event log used for the encounter stratum when given
        variant: Model variant to sweep
        max_steps: Cap on optimizer steps per run
        deterministic: Force single-threaded BLAS

    Returns:
        Horizon curves with a leading `dt` column
    """
    seeds = list(seeds)
    parts = []
    for dt, steps in resolutions:
        run_cfg = config_at_resolution(cfg, dt, steps)
        samples = run_pipeline(fixes, geometry, run_cfg.pipeline)
        if not samples:
            logger.warning(f"No samples at dt={dt:g}s; skipping")
            continue
        encounter = None
        if events is not None:
            encounter = encounter_from_annotations(samples, label_interactions(samples, events))
        logger.info(f"Resolution {dt:g}s x {steps} steps: {len(samples)} samples")
        result = run_ablation(
            samples,
            run_cfg,
            geometry,
            seeds=seeds,
            epochs=epochs,
            variants=(variant,),
            encounter=encounter,
            max_steps=max_steps,
            deterministic=deterministic,
        )
        curves = result.curves
        curves.insert(0, "dt", dt)
        parts.append(curves)
    if not parts:
        raise ValueError("no resolution produced any samples")
    return pd.concat(parts, ignore_index=True)
