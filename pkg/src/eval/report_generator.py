"""Markdown report of an ablation run."""

from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import pandas as pd

from src.eval.config import EvalConfig
from src.utils.logger import get_logger

logger = get_logger(__name__)


class ReportGenerator:
    """Generate the ablation report."""

    def __init__(self, output_dir: Optional[Path] = None):
        """Initialize report generator."""
        EvalConfig.ensure_directories()
        self.output_dir = Path(output_dir) if output_dir is not None else EvalConfig.EVAL_OUTPUT_DIR
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def generate_markdown_report(
        self,
        table: pd.DataFrame,
        summary: pd.DataFrame,
        visualizations: Optional[Mapping[str, Path]] = None,
        metadata: Optional[Dict[str, Any]] = None,
        filename: str = "ablation_report.md",
    ) -> Path:
        """
        Generate markdown format ablation report.

        Args:
            table: One row per (variant, seed) from run_ablation
            summary: Seed-averaged rows from summarize
            visualizations: Figure name -> path
            metadata: Run settings shown in the header
            filename: Output filename

        Returns:
            Path to saved report
        """
        metadata = metadata or {}
        visualizations = visualizations or {}
        good = f"{EvalConfig.FDE_GOOD_THRESHOLD:g}"
        poor = f"{EvalConfig.FDE_POOR_THRESHOLD:g}"

        settings = "\n".join(f"- **{key}:** {value}" for key, value in metadata.items())
        md_content = f"""# {EvalConfig.REPORT_TITLE}

**Generated:** {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}

## Setup

{settings or '- (no settings recorded)'}
- **Seeds:** {', '.join(str(s) for s in sorted(table['seed'].unique()))}
- **Test samples per run:** {int(table['n_test'].iloc[0]) if len(table) else 0}

## Comparison

ADE and FDE after the full horizon, mean ± std over test samples, averaged over seeds.

| Variant | ADE (m) | FDE (m) | Encounter ADE (m) | Encounter FDE (m) | FDE ≤ {good} m | FDE > {poor} m |
|---------|---------|---------|-------------------|-------------------|-----------|-----------|
{self._comparison_rows(table)}

## Seed spread

| Variant | Seeds | FDE avg (m) | FDE spread over seeds (m) | Encounter FDE avg (m) | Encounter FDE spread (m) |
|---------|-------|-------------|---------------------------|-----------------------|--------------------------|
{self._summary_rows(summary)}

## Per-run results

| Variant | Seed | Test | Encounter | ADE (m) | FDE (m) | Label accuracy | Final loss |
|---------|------|------|-----------|---------|---------|----------------|------------|
{self._run_rows(table)}

## Observations

{self._observations(summary)}

## Figures

{self._figure_lines(visualizations)}
"""

        output_path = self.output_dir / filename
        with open(output_path, "w", encoding="utf-8") as f:
            f.write(md_content)

        logger.info(f"Markdown report saved to {output_path}")
        return output_path

    @staticmethod
    def _pm(mean: float, std: float) -> str:
        if pd.isna(mean):
            return "n/a"
        return f"{mean:.2f} ± {std:.2f}"

    def _comparison_rows(self, table: pd.DataFrame) -> str:
        rows = []
        for variant, group in table.groupby("variant", sort=False):
            mean = group.mean(numeric_only=True)
            rows.append(
                f"| {variant} | {self._pm(mean['ade_mean'], mean['ade_std'])} "
                f"| {self._pm(mean['fde_mean'], mean['fde_std'])} "
                f"| {self._pm(mean['enc_ade_mean'], mean['enc_ade_std'])} "
                f"| {self._pm(mean['enc_fde_mean'], mean['enc_fde_std'])} "
                f"| {mean['fde_le_good']:.1%} | {mean['fde_gt_poor']:.1%} |"
            )
        return "\n".join(rows)

    def _summary_rows(self, summary: pd.DataFrame) -> str:
        return "\n".join(
            f"| {row.variant} | {row.seeds} | {row.fde_mean_avg:.2f} | {row.fde_mean_seed_std:.2f} "
            f"| {row.enc_fde_mean_avg:.2f} | {row.enc_fde_mean_seed_std:.2f} |"
            for row in summary.itertuples()
        )

    @staticmethod
    def _run_rows(table: pd.DataFrame) -> str:
        return "\n".join(
            f"| {row.variant} | {row.seed} | {row.n_test} | {row.n_encounter} | {row.ade_mean:.2f} "
            f"| {row.fde_mean:.2f} | {row.label_accuracy:.1%} | {row.final_loss:.4f} |"
            for row in table.itertuples()
        )

    @staticmethod
    def _observations(summary: pd.DataFrame) -> str:
        """Pairwise comparison of neighbouring variants on the encounter stratum."""
        by_variant = summary.set_index("variant")
        lines = []
        for better, worse in (("sosp-ct", "sp-ct"), ("sp-ct", "ct")):
            if better not in by_variant.index or worse not in by_variant.index:
                continue
            for column, label in (("enc_fde_mean_avg", "encounter FDE"), ("fde_mean_avg", "FDE")):
                a, b = by_variant.loc[better, column], by_variant.loc[worse, column]
                if pd.isna(a) or pd.isna(b) or b == 0:
                    continue
                change = (b - a) / b
                mark = "✓" if change > 0 else "✗"
                lines.append(f"- **{mark} {better} vs {worse}:** {label} {a:.2f} m vs {b:.2f} m ({change:+.1%} relative)")
        return "\n".join(lines) or "- Not enough variants to compare."

    def _figure_lines(self, visualizations: Mapping[str, Path]) -> str:
        if not visualizations:
            return "- (no figures generated)"
        lines = []
        for name, path in visualizations.items():
            path = Path(path)
            try:
                shown = path.relative_to(self.output_dir)
            except ValueError:
                shown = path
            lines.append(f"![{name}]({shown})")
        return "\n\n".join(lines)
