"""Displacement metrics for trajectory predictions."""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score

from src.eval.config import EvalConfig


@dataclass
class ErrorSummary:
    """Container for mean / std of one error measure over a sample set."""
    mean: float
    std: float
    count: int


@dataclass
class EvalReport:
    """
    Per-sample displacement errors of one evaluation run.

    `fde_by_step[i, k]` is the Euclidean error (m) of sample i after k + 1
    predicted steps; ADE is its row mean and FDE its last column.
    """

    sample_ids: List[str]
    fde_by_step: np.ndarray
    encounter: np.ndarray
    dt: float = 60.0
    variant: str = ""
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def ade(self) -> np.ndarray:
        return self.fde_by_step.mean(axis=1)

    @property
    def fde(self) -> np.ndarray:
        return self.fde_by_step[:, -1]

    @property
    def n(self) -> int:
        return self.fde_by_step.shape[1]

    def __len__(self) -> int:
        return len(self.sample_ids)

    def subset(self, selector: np.ndarray) -> "EvalReport":
        selector = np.asarray(selector, dtype=bool)
        return EvalReport(
            sample_ids=[s for s, keep in zip(self.sample_ids, selector) if keep],
            fde_by_step=self.fde_by_step[selector],
            encounter=self.encounter[selector],
            dt=self.dt,
            variant=self.variant,
            metadata=dict(self.metadata),
        )

    def strata(self) -> Dict[str, "EvalReport"]:
        """All samples, encounter-affected samples, and the rest."""
        return {
            "all": self,
            "encounter": self.subset(self.encounter),
            "no_encounter": self.subset(~self.encounter),
        }

    def horizon_curve(self) -> pd.DataFrame:
        """Mean and std FDE when each horizon step is considered final."""
        steps = np.arange(1, self.n + 1)
        if len(self) == 0:
            mean = std = np.full(self.n, np.nan)
        else:
            mean = self.fde_by_step.mean(axis=0)
            std = self.fde_by_step.std(axis=0)
        return pd.DataFrame(
            {
                "step": steps,
                "minutes": steps * self.dt / 60.0,
                "fde_mean": mean,
                "fde_std": std,
            }
        )

    def summary(self) -> Dict[str, Any]:
        """Aggregates, quantiles and FDE distribution per stratum."""
        out: Dict[str, Any] = {"variant": self.variant, "n": self.n, "dt": self.dt}
        for name, part in self.strata().items():
            out[name] = {
                "ade": MetricsCalculator.metrics_to_dict(MetricsCalculator.mean_std(part.ade)),
                "fde": MetricsCalculator.metrics_to_dict(MetricsCalculator.mean_std(part.fde)),
                "fde_quantiles": MetricsCalculator.quantile_table(part.fde),
                "fde_distribution": MetricsCalculator.fde_distribution(part.fde),
            }
        return out

    def to_frame(self) -> pd.DataFrame:
        """One row per sample with ADE, FDE and every per-step error."""
        frame = pd.DataFrame(
            {
                "sample_id": self.sample_ids,
                "encounter": self.encounter,
                "ade": self.ade,
                "fde": self.fde,
            }
        )
        for k in range(self.n):
            frame[f"fde_step_{k + 1}"] = self.fde_by_step[:, k]
        return frame

    def check_consistency(self, tol: float = 1e-9) -> List[str]:
        """Problems found when recomputing aggregates from per-sample values; empty when consistent."""
        problems = []
        if self.fde_by_step.shape != (len(self.sample_ids), self.n):
            problems.append("per-step table does not match the sample count")
        if not np.all(np.isfinite(self.fde_by_step)):
            problems.append("non-finite displacement errors")
        if np.any(self.ade > self.fde_by_step.max(axis=1, initial=0.0) + tol):
            problems.append("ADE exceeds the largest per-step error")
        if len(self) and abs(self.ade.mean() - self.fde_by_step.mean()) > tol:
            problems.append("mean ADE differs from the mean of the per-step table")
        quantiles = list(MetricsCalculator.quantile_table(self.fde).values())
        if any(b < a - tol for a, b in zip(quantiles, quantiles[1:])):
            problems.append("FDE quantiles are not monotone")
        return problems


class MetricsCalculator:
    """Calculate displacement metrics for trajectory predictions."""

    @staticmethod
    def step_errors(predicted: np.ndarray, truth: np.ndarray) -> np.ndarray:
        """
        Euclidean error at every predicted step.

        Args:
            predicted: (n, 2) predicted positions (m)
            truth: (n, 2) true positions (m)

        Returns:
            (n,) errors in meters
        """
        predicted = np.asarray(predicted, dtype=np.float64)
        truth = np.asarray(truth, dtype=np.float64)
        if predicted.shape != truth.shape:
            raise ValueError(f"prediction shape {predicted.shape} differs from ground truth {truth.shape}")
        return np.linalg.norm(predicted - truth, axis=-1)

    @staticmethod
    def ade_fde(predicted: np.ndarray, truth: np.ndarray) -> Dict[str, float]:
        errors = MetricsCalculator.step_errors(predicted, truth)
        return {"ade": float(errors.mean()), "fde": float(errors[-1])}

    @staticmethod
    def build_report(
        predictions: Sequence[np.ndarray],
        truths: Sequence[np.ndarray],
        sample_ids: Sequence[str],
        encounter: Optional[Sequence[bool]] = None,
        dt: float = 60.0,
        variant: str = "",
    ) -> EvalReport:
        """
        Collect per-step errors of many samples into a report.

        Args:
            predictions: Predicted (n, 2) tracks
            truths: True (n, 2) tracks
            sample_ids: One identifier per sample
            encounter: Encounter-affected flag per sample
            dt: Step length (s)
            variant: Model variant name

        Returns:
            EvalReport
        """
        if not (len(predictions) == len(truths) == len(sample_ids)):
            raise ValueError("predictions, truths and ids must have equal length")
        if len(predictions) == 0:
            raise ValueError("cannot build a report from zero predictions")
        table = np.stack([MetricsCalculator.step_errors(p, t) for p, t in zip(predictions, truths)])
        flags = np.zeros(len(sample_ids), dtype=bool) if encounter is None else np.asarray(encounter, dtype=bool)
        return EvalReport(list(sample_ids), table, flags, dt=dt, variant=variant)

    @staticmethod
    def mean_std(values: np.ndarray) -> ErrorSummary:
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            return ErrorSummary(mean=float("nan"), std=float("nan"), count=0)
        return ErrorSummary(mean=float(values.mean()), std=float(values.std()), count=int(values.size))

    @staticmethod
    def quantile_table(values: np.ndarray, quantiles: Sequence[float] = EvalConfig.FDE_QUANTILES) -> Dict[str, float]:
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            return {f"q{int(round(q * 100))}": float("nan") for q in quantiles}
        return {f"q{int(round(q * 100))}": float(np.quantile(values, q)) for q in quantiles}

    @staticmethod
    def fde_distribution(
        fde: np.ndarray,
        good: float = EvalConfig.FDE_GOOD_THRESHOLD,
        poor: float = EvalConfig.FDE_POOR_THRESHOLD,
    ) -> Dict[str, float]:
        """Share of samples with FDE at most `good` meters and above `poor` meters."""
        fde = np.asarray(fde, dtype=np.float64)
        if fde.size == 0:
            return {f"le_{good:g}m": float("nan"), f"gt_{poor:g}m": float("nan")}
        return {
            f"le_{good:g}m": float(np.mean(fde <= good)),
            f"gt_{poor:g}m": float(np.mean(fde > poor)),
        }

    @staticmethod
    def label_accuracy(predicted: np.ndarray, truth: np.ndarray) -> float:
        """Share of correctly predicted per-step labels."""
        return float(accuracy_score(np.asarray(truth).reshape(-1), np.asarray(predicted).reshape(-1)))

    @staticmethod
    def metrics_to_dict(metrics_obj: Any) -> Dict[str, Any]:
        """Convert metrics dataclass to dictionary."""
        if hasattr(metrics_obj, "__dataclass_fields__"):
            return asdict(metrics_obj)
        return vars(metrics_obj)
