"""Configuration for the training and evaluation harness."""

from pathlib import Path

from src.utils.config import Config


class EvalConfig:
    """Paths, plot settings and report constants for the harness."""

    # Base paths
    PROJECT_ROOT = Path(__file__).parent.parent.parent
    DATA_DIR = PROJECT_ROOT / "data"
    EVAL_OUTPUT_DIR = Config.OUTPUT_DIR if Config.OUTPUT_DIR.is_absolute() else PROJECT_ROOT / Config.OUTPUT_DIR
    CHECKPOINT_DIR = EVAL_OUTPUT_DIR / "checkpoints"

    # FDE distribution shares reported next to the horizon curves (m)
    FDE_GOOD_THRESHOLD = 50.0
    FDE_POOR_THRESHOLD = 100.0

    # Quantile table of the FDE
    FDE_QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9, 0.95)

    # Samples per greedy-decoding chunk handed to a worker
    DECODE_CHUNK = 64

    # Time-resolution study: (dt seconds, observed steps = predicted steps)
    RESOLUTIONS = ((30.0, 10), (60.0, 5), (90.0, 3))

    # Visualization settings
    PLOT_DPI = 100
    PLOT_FIGSIZE = (12, 8)
    PLOT_STYLE = "whitegrid"
    VARIANT_COLORS = {"ct": "#7f8c8d", "sp-ct": "#2980b9", "sosp-ct": "#c0392b"}

    # Report generation
    REPORT_TITLE = "Vessel Trajectory Prediction Ablation Report"

    @classmethod
    def ensure_directories(cls):
        """Ensure all required directories exist."""
        cls.EVAL_OUTPUT_DIR.mkdir(parents=True, exist_ok=True)
        cls.CHECKPOINT_DIR.mkdir(parents=True, exist_ok=True)
