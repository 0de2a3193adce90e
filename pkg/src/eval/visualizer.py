"""Figures for training and evaluation results."""

from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence

import matplotlib
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from src.data.social_tensor import SocialTensor
from src.eval.config import EvalConfig
from src.eval.evaluator import PredictionRecord
from src.eval.metrics import EvalReport
from src.navigation.geometry import FairwayGeometry

matplotlib.use("Agg")
sns.set_style(EvalConfig.PLOT_STYLE)


class TrajectoryVisualizer:
    """Generate figures for trained models and ablation runs."""

    def __init__(self, output_dir: Optional[Path] = None):
        """
        Initialize visualizer.

        Args:
            output_dir: Figure directory (default EvalConfig.EVAL_OUTPUT_DIR)
        """
        EvalConfig.ensure_directories()
        self.output_dir = Path(output_dir) if output_dir is not None else EvalConfig.EVAL_OUTPUT_DIR
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def _save(self, fig: plt.Figure, filename: str) -> Path:
        fig.tight_layout()
        output_path = self.output_dir / filename
        fig.savefig(output_path, dpi=EvalConfig.PLOT_DPI, bbox_inches="tight")
        plt.close(fig)
        return output_path

    def _palette(self, names: Sequence[str]) -> Dict[str, str]:
        fallback = sns.color_palette(n_colors=max(len(names), 1)).as_hex()
        return {name: EvalConfig.VARIANT_COLORS.get(name, fallback[i]) for i, name in enumerate(names)}

    def plot_horizon_curves(
        self,
        curves: pd.DataFrame,
        stratum: str = "all",
        filename: Optional[str] = None,
    ) -> Path:
        """
        Plot FDE when each horizon step is considered final, one line per variant.

        Args:
            curves: Rows with variant, seed, stratum, minutes and fde_mean
            stratum: "all", "encounter" or "no_encounter"
            filename: Output filename

        Returns:
            Path to saved figure
        """
        data = curves[curves["stratum"] == stratum].dropna(subset=["fde_mean"])
        fig, ax = plt.subplots(figsize=(10, 6), dpi=EvalConfig.PLOT_DPI)
        if data.empty:
            ax.text(0.5, 0.5, f"No {stratum} samples", ha="center", va="center")
        else:
            variants = list(dict.fromkeys(data["variant"]))
            sns.lineplot(
                data=data,
                x="minutes",
                y="fde_mean",
                hue="variant",
                hue_order=variants,
                palette=self._palette(variants),
                marker="o",
                errorbar="sd",
                ax=ax,
            )
            ax.legend(title="Variant")
        ax.set_xlabel("Prediction horizon (min)")
        ax.set_ylabel("FDE (m)")
        ax.set_title(f"FDE over the prediction horizon ({stratum.replace('_', ' ')})")
        return self._save(fig, filename or f"fde_horizon_{stratum}.png")

    def plot_fde(self, curves: pd.DataFrame, stem: str = "fde_horizon") -> Dict[str, Path]:
        """Horizon curves as CSV plus one figure per stratum present."""
        csv_path = self.output_dir / f"{stem}.csv"
        curves.to_csv(csv_path, index=False)
        paths = {"csv": csv_path}
        for stratum in dict.fromkeys(curves["stratum"]):
            paths[stratum] = self.plot_horizon_curves(curves, stratum, f"{stem}_{stratum}.png")
        return paths

    def plot_resolution_curves(self, curves: pd.DataFrame, filename: str = "fde_resolution.png") -> Path:
        """FDE over time for several step lengths of one variant."""
        data = curves[curves["stratum"] == "all"].copy()
        data["resolution"] = data["dt"].map(lambda dt: f"{dt:g} s")
        fig, ax = plt.subplots(figsize=(10, 6), dpi=EvalConfig.PLOT_DPI)
        sns.lineplot(data=data, x="minutes", y="fde_mean", hue="resolution", marker="o", errorbar="sd", ax=ax)
        ax.set_xlabel("Prediction horizon (min)")
        ax.set_ylabel("FDE (m)")
        ax.set_title("FDE over time at different time resolutions")
        return self._save(fig, filename)

    def plot_fde_distribution(
        self,
        reports: Mapping[str, EvalReport],
        filename: str = "fde_distribution.png",
    ) -> Path:
        """
        Histogram of per-sample FDE per variant with the reference thresholds marked.

        Args:
            reports: Variant name -> evaluation report
            filename: Output filename

        Returns:
            Path to saved figure
        """
        frame = pd.DataFrame(
            [{"variant": name, "fde": value} for name, report in reports.items() for value in report.fde]
        )
        fig, ax = plt.subplots(figsize=(10, 6), dpi=EvalConfig.PLOT_DPI)
        if frame.empty:
            ax.text(0.5, 0.5, "No evaluation data available", ha="center", va="center")
        else:
            variants = list(reports)
            sns.histplot(
                data=frame,
                x="fde",
                hue="variant",
                hue_order=variants,
                palette=self._palette(variants),
                stat="percent",
                common_norm=False,
                element="step",
                bins=30,
                ax=ax,
            )
        for threshold in (EvalConfig.FDE_GOOD_THRESHOLD, EvalConfig.FDE_POOR_THRESHOLD):
            ax.axvline(threshold, color="black", linestyle="--", alpha=0.6)
        ax.set_xlabel("FDE (m)")
        ax.set_ylabel("Share of samples (%)")
        ax.set_title("FDE distribution")
        return self._save(fig, filename)

    def plot_prediction_example(
        self,
        geometry: FairwayGeometry,
        records: Mapping[str, PredictionRecord],
        observed_xy: Optional[np.ndarray] = None,
        filename: str = "prediction_example.png",
        margin: float = 300.0,
    ) -> Path:
        """
        Draw predicted tracks of several variants for one sample on the fairway.

        Args:
            geometry: Fairway geometry
            records: Variant name -> prediction record of the same sample
            observed_xy: Observed positions of the target
            filename: Output filename
            margin: Extra map extent around the tracks (m)

        Returns:
            Path to saved figure
        """
        fig, ax = plt.subplots(figsize=(10, 8), dpi=EvalConfig.PLOT_DPI)
        ax.plot(*geometry.right_border.T, color="saddlebrown", linewidth=1.5, label="Fairway border")
        ax.plot(*geometry.left_border.T, color="saddlebrown", linewidth=1.5)
        ax.plot(*geometry.centerline.T, color="gray", linestyle=":", linewidth=1)

        points = []
        if observed_xy is not None:
            observed_xy = np.asarray(observed_xy)
            ax.plot(*observed_xy.T, color="black", marker="o", label="Observed")
            points.append(observed_xy)
        palette = self._palette(list(records))
        truth_drawn = False
        for name, record in records.items():
            predicted = np.asarray(record.predicted_xy)
            if not truth_drawn:
                truth = np.asarray(record.true_xy)
                ax.plot(*truth.T, color="green", marker="s", label="Ground truth")
                points.append(truth)
                truth_drawn = True
            ax.plot(*predicted.T, color=palette[name], marker="^", label=f"{name} (FDE {record.fde:.1f} m)")
            points.append(predicted)

        if points:
            allp = np.concatenate(points)
            lo, hi = allp.min(axis=0) - margin, allp.max(axis=0) + margin
            ax.set_xlim(lo[0], hi[0])
            ax.set_ylim(lo[1], hi[1])
        ax.set_aspect("equal")
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
        ax.set_title("Predicted tracks")
        ax.legend(loc="best")
        return self._save(fig, filename)

    def plot_loss_history(
        self,
        histories: Mapping[str, pd.DataFrame],
        filename: str = "loss_history.png",
    ) -> Path:
        """Training loss and learned uncertainties per epoch."""
        fig, (ax_loss, ax_sigma) = plt.subplots(1, 2, figsize=EvalConfig.PLOT_FIGSIZE, dpi=EvalConfig.PLOT_DPI)
        palette = self._palette(list(histories))
        for name, history in histories.items():
            ax_loss.plot(history["epoch"], history["loss"], color=palette[name], label=name)
            ax_sigma.plot(history["epoch"], history["sigma_x"], color=palette[name], label=f"{name} σx")
            ax_sigma.plot(history["epoch"], history["sigma_y"], color=palette[name], linestyle="--", label=f"{name} σy")
        ax_loss.set_xlabel("Epoch")
        ax_loss.set_ylabel("Weighted loss")
        ax_loss.set_title("Training loss")
        ax_loss.legend()
        ax_sigma.set_xlabel("Epoch")
        ax_sigma.set_ylabel("σ")
        ax_sigma.set_title("Learned task uncertainties")
        ax_sigma.legend()
        return self._save(fig, filename)

    def plot_occupancy(self, tensor: SocialTensor, filename: str = "occupancy_grid.png") -> Path:
        """One heatmap of the relative speed magnitude per observed step; empty cells blank."""
        t_obs = tensor.t_obs
        fig, axes = plt.subplots(1, t_obs, figsize=(3 * t_obs, 6), dpi=EvalConfig.PLOT_DPI, squeeze=False)
        speed = np.linalg.norm(tensor.values, axis=-1)
        vmax = max(float(speed[tensor.mask].max()) if tensor.mask.any() else 0.0, 1e-9)
        for t, ax in enumerate(axes[0]):
            sns.heatmap(
                speed[:, :, t].T,
                mask=~tensor.mask[:, :, t].T,
                vmin=0.0,
                vmax=vmax,
                cmap="viridis",
                cbar=t == t_obs - 1,
                linewidths=0.3,
                linecolor="lightgray",
                ax=ax,
            )
            ax.invert_yaxis()
            ax.set_title(f"step {t + 1}")
            ax.set_xlabel("lateral cell")
            ax.set_ylabel("longitudinal cell" if t == 0 else "")
        fig.suptitle("Occupancy grid: relative motion per step (m)")
        return self._save(fig, filename)

    def generate_all_visualizations(
        self,
        curves: pd.DataFrame,
        reports: Mapping[str, EvalReport],
        histories: Mapping[str, pd.DataFrame],
    ) -> Dict[str, Path]:
        """
        Generate the standard ablation figures.

        Args:
            curves: Horizon curves of all runs
            reports: Variant name -> report of one representative seed
            histories: Variant name -> loss history of the same seed

        Returns:
            Dictionary mapping visualization names to file paths
        """
        visualizations = {f"fde_horizon_{k}": v for k, v in self.plot_fde(curves).items() if k != "csv"}
        visualizations["fde_distribution"] = self.plot_fde_distribution(reports)
        visualizations["loss_history"] = self.plot_loss_history(histories)
        return visualizations
