"""Greedy decoding, metric reconstruction and displacement evaluation."""

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from src.data.dataset import FeatureFrame, TrajectoryDataset, heading_to_cartesian
from src.eval.config import EvalConfig
from src.eval.metrics import EvalReport, MetricsCalculator
from src.eval.trainer import batch_inputs
from src.model.checkpoint import build_manifest, load_checkpoint
from src.model.transformer import ClassificationTransformer
from src.navigation.codec import DislocationLabel, LabelCodec, reconstruct
from src.navigation.geometry import KM_TO_M, FairwayGeometry, NavFrameState
from src.utils.config import Config
from src.utils.errors import ManifestMismatch, ProjectionOutOfRange
from src.utils.logger import get_logger

logger = get_logger(__name__)


class PredictionRecord(BaseModel):
    """One predicted track as written to the predictions JSONL."""
    target_id: str
    agent_id: str
    start_t: float
    variant: str
    labels: List[Tuple[int, int]]
    predicted_xy: List[Tuple[float, float]]
    true_xy: List[Tuple[float, float]]
    ade: float
    fde: float
    encounter: bool


def rollout(
    start: NavFrameState,
    labels: List[DislocationLabel],
    codec: LabelCodec,
    geometry: FairwayGeometry,
) -> Tuple[np.ndarray, bool]:
    """
    Navigation-frame rollout that stays on the geometry.

    Returns:
        (n, 2) Cartesian positions and whether the longitudinal rollout had to be
        clamped to the geometry span
    """
    try:
        return reconstruct(start, labels, codec, geometry), False
    except ProjectionOutOfRange:
        dx, dy = codec.decode_array([l.x for l in labels], [l.y for l in labels])
        f = start.f + np.cumsum(dx)
        km = start.km + np.cumsum(dy) / KM_TO_M
        lo, hi = sorted((float(geometry.km_of(0.0)), float(geometry.km_of(geometry.length))))
        return geometry.from_nav_frame_many(np.clip(km, lo, hi), f), True


class TrajectoryEvaluator:
    """Evaluate a trained model on a dataset in meters."""

    def __init__(
        self,
        model: ClassificationTransformer,
        manifest: Optional[Dict[str, Any]] = None,
        workers: Optional[int] = None,
    ):
        """
        Initialize evaluator.

        Args:
            model: Trained model
            manifest: Checkpoint manifest (derived from the model if not provided)
            workers: Decoding threads (default from Config)
        """
        self.model = model
        self.manifest = manifest or build_manifest(model)
        self.workers = workers or Config.worker_count()

    @classmethod
    def from_checkpoint(cls, directory: Path, workers: Optional[int] = None) -> "TrajectoryEvaluator":
        model, manifest = load_checkpoint(directory)
        return cls(model, manifest, workers)

    @property
    def variant(self) -> str:
        return self.manifest["variant"]

    def check_dataset(self, dataset: TrajectoryDataset) -> None:
        """
        Raise ManifestMismatch when the dataset was built differently from the checkpoint.
        """
        if not LabelCodec.from_dict(self.manifest["codec"]).matches(dataset.codec):
            raise ManifestMismatch("dataset codec edges differ from the checkpoint")
        if dataset.frame.value != self.manifest["frame"]:
            raise ManifestMismatch(f"dataset uses {dataset.frame.value} labels, checkpoint {self.manifest['frame']}")
        if self.model.variant.social:
            if not dataset.has_social:
                raise ManifestMismatch("checkpoint needs social tensors, dataset has none")
            if dataset.grid.model_dump(mode="json") != self.manifest["grid"]:
                raise ManifestMismatch("dataset grid differs from the checkpoint")
        if dataset.t_obs != self.model.t_obs or dataset.n != self.model.n:
            raise ManifestMismatch("dataset window layout differs from the checkpoint")

    def predict_labels(self, dataset: TrajectoryDataset) -> Tuple[np.ndarray, np.ndarray]:
        """
        Greedy labels for every sample, in dataset order.

        Returns:
            (N, n) lateral and longitudinal labels
        """
        self.check_dataset(dataset)
        chunks = [np.arange(i, min(i + EvalConfig.DECODE_CHUNK, len(dataset))) for i in range(0, len(dataset), EvalConfig.DECODE_CHUNK)]
        use_social = self.model.variant.social

        def decode(idx: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            inputs = batch_inputs(dataset, idx)
            return self.model.greedy_decode(
                inputs["obs_x"],
                inputs["obs_y"],
                inputs["context"],
                inputs["social_values"] if use_social else None,
                inputs["social_mask"] if use_social else None,
            )

        if self.workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                parts = list(pool.map(decode, chunks))
        else:
            parts = [decode(idx) for idx in chunks]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    def to_metric(
        self,
        dataset: TrajectoryDataset,
        i: int,
        ix: np.ndarray,
        iy: np.ndarray,
        geometry: Optional[FairwayGeometry],
    ) -> Tuple[np.ndarray, bool]:
        """Cartesian track (n, 2) of sample i's predicted labels."""
        if dataset.frame is FeatureFrame.NAVIGATION:
            if geometry is None:
                raise ValueError("navigation-frame predictions need the fairway geometry")
            labels = [DislocationLabel(x=int(a), y=int(b)) for a, b in zip(ix, iy)]
            return rollout(dataset.anchor_state(i), labels, dataset.codec, geometry)
        lateral, longitudinal = dataset.codec.decode_array(ix, iy)
        steps = heading_to_cartesian(lateral, longitudinal, float(dataset.headings[i]))
        return dataset.anchor_xy(i) + np.cumsum(steps, axis=0), False

    def evaluate(
        self,
        dataset: TrajectoryDataset,
        geometry: Optional[FairwayGeometry] = None,
        encounter: Optional[np.ndarray] = None,
    ) -> Tuple[EvalReport, List[PredictionRecord]]:
        """
        Decode, reconstruct and score every sample.

        Args:
            dataset: Evaluation data matching the checkpoint
            geometry: Fairway geometry (required for navigation-frame variants)
            encounter: Encounter flag per sample, overriding the detected interactions

        Returns:
            (EvalReport, one PredictionRecord per sample)

        Raises:
            ManifestMismatch: If codec, frame or grid disagree with the checkpoint
        """
        logger.info(f"Evaluating {self.variant} on {len(dataset)} samples")
        lx, ly = self.predict_labels(dataset)

        flags = dataset.encounter_flags() if encounter is None else np.asarray(encounter, dtype=bool)
        predictions, truths, records = [], [], []
        clamped = 0
        for i, sample in enumerate(dataset.samples):
            xy, was_clamped = self.to_metric(dataset, i, lx[i], ly[i], geometry)
            clamped += was_clamped
            truth = dataset.future_xy(i)
            scores = MetricsCalculator.ade_fde(xy, truth)
            predictions.append(xy)
            truths.append(truth)
            records.append(
                PredictionRecord(
                    target_id=sample.target_id,
                    agent_id=sample.agent_id,
                    start_t=sample.start_t,
                    variant=self.variant,
                    labels=list(zip(lx[i].tolist(), ly[i].tolist())),
                    predicted_xy=[tuple(p) for p in xy.tolist()],
                    true_xy=[tuple(p) for p in truth.tolist()],
                    ade=scores["ade"],
                    fde=scores["fde"],
                    encounter=bool(flags[i]),
                )
            )
        if clamped:
            logger.warning(f"{clamped} predicted tracks left the fairway span and were clamped")

        report = MetricsCalculator.build_report(
            predictions,
            truths,
            sample_ids=[f"{s.target_id}@{s.start_t:g}" for s in dataset.samples],
            encounter=flags,
            dt=dataset.samples[0].dt,
            variant=self.variant,
        )
        report.metadata.update({"clamped": clamped, "label_accuracy": self._label_accuracy(dataset, lx, ly)})
        return report, records

    @staticmethod
    def _label_accuracy(dataset: TrajectoryDataset, lx: np.ndarray, ly: np.ndarray) -> float:
        return MetricsCalculator.label_accuracy(
            np.concatenate([lx, ly], axis=1), np.concatenate([dataset.fut_x, dataset.fut_y], axis=1)
        )


def write_predictions(records: List[PredictionRecord], path: Path) -> Path:
    """Write prediction records as JSONL."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(record.model_dump_json() + "\n")
    return path


def write_report(report: EvalReport, directory: Path, prefix: str = "") -> Dict[str, Path]:
    """Per-sample metrics CSV, horizon-curve CSV and summary JSON of one report."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "metrics": directory / f"{prefix}metrics.csv",
        "horizon": directory / f"{prefix}fde_horizon.csv",
        "summary": directory / f"{prefix}summary.json",
    }
    report.to_frame().to_csv(paths["metrics"], index=False)
    report.horizon_curve().to_csv(paths["horizon"], index=False)
    with open(paths["summary"], "w", encoding="utf-8") as f:
        json.dump({**report.summary(), "metadata": report.metadata}, f, indent=2, default=str)
    return paths
