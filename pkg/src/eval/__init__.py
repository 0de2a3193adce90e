"""Training and evaluation harness: trainer, evaluator, metrics, ablation studies, figures and reports."""

from src.eval.ablation import AblationResult, resolution_sweep, run_ablation, summarize
from src.eval.evaluator import PredictionRecord, TrajectoryEvaluator, write_predictions, write_report
from src.eval.metrics import EvalReport, MetricsCalculator
from src.eval.report_generator import ReportGenerator
from src.eval.trainer import TrainResult, train
from src.eval.visualizer import TrajectoryVisualizer

__all__ = [
    "AblationResult",
    "run_ablation",
    "summarize",
    "resolution_sweep",
    "PredictionRecord",
    "TrajectoryEvaluator",
    "write_predictions",
    "write_report",
    "EvalReport",
    "MetricsCalculator",
    "ReportGenerator",
    "TrainResult",
    "train",
    "TrajectoryVisualizer",
]
