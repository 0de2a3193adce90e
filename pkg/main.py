#!/usr/bin/env python3
"""
Fairway Trajectory Transformer CLI

Preprocess vessel position reports, generate synthetic waterway traffic, and
train / evaluate / compare the CT, sp-CT and sosp-CT trajectory predictors.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from src.data.collector import DatasetCollector, dump_json
from src.data.dataset import split_by_trip, trip_split_indices
from src.data.pipeline import SequenceSample, run_pipeline
from src.data.synthetic import ScenarioConfig, generate, label_interactions
from src.eval.ablation import encounter_from_annotations, resolution_sweep, run_ablation, summarize, variant_dataset
from src.eval.config import EvalConfig
from src.eval.evaluator import TrajectoryEvaluator, write_predictions, write_report
from src.eval.report_generator import ReportGenerator
from src.eval.trainer import train
from src.eval.visualizer import TrajectoryVisualizer
from src.model.config import ModelConfig, Variant
from src.navigation.geometry import FairwayGeometry
from src.utils.config import Config
from src.utils.errors import TrajectoryError

# Initialize rich console
console = Console()


def print_banner():
    """Print welcome banner with colors."""
    banner_text = Text()
    banner_text.append("FAIRWAY TRAJECTORY TRANSFORMER", style="bold cyan")
    banner_text.append("\nVessel trajectory prediction in the ", style="white")
    banner_text.append("navigation-area frame", style="bold magenta")
    banner_text.append(" with ", style="white")
    banner_text.append("social tensor fusion", style="bold green")

    console.print(Panel(banner_text, border_style="cyan", padding=(1, 2)))


def load_model_config(args: argparse.Namespace, **overrides: Any) -> ModelConfig:
    """Model configuration from --config (flat key-value file) plus CLI overrides."""
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if getattr(args, "config", None):
        cfg = ModelConfig.from_file(Path(args.config), **overrides)
        console.print(f"[dim]Loaded model configuration from {args.config}[/dim]")
        return cfg
    return ModelConfig.model_validate(overrides)


def load_data_dir(directory: Path) -> Tuple[FairwayGeometry, List[SequenceSample], Optional[np.ndarray]]:
    """
    Geometry, samples and (when an event log is present) encounter flags of a data directory.
    """
    collector = DatasetCollector(directory)
    geometry = collector.load_geometry()
    samples = collector.load_samples()
    encounter = None
    if (collector.directory / "events.jsonl").exists():
        events = collector.load_events()
        encounter = encounter_from_annotations(samples, label_interactions(samples, events))
        console.print(f"[dim]Encounter stratum from generator events: {int(encounter.sum())} samples[/dim]")
    console.print(f"[green]✓[/green] Loaded {len(samples)} samples from {directory}")
    return geometry, samples, encounter


def print_summary(summary: Dict[str, Any], title: str):
    table = Table(title=title)
    table.add_column("Stratum", style="cyan")
    table.add_column("Samples", justify="right")
    table.add_column("ADE (m)", justify="right")
    table.add_column("FDE (m)", justify="right")
    table.add_column(f"FDE ≤ {EvalConfig.FDE_GOOD_THRESHOLD:g} m", justify="right")
    table.add_column(f"FDE > {EvalConfig.FDE_POOR_THRESHOLD:g} m", justify="right")
    for stratum in ("all", "encounter", "no_encounter"):
        part = summary[stratum]
        good, poor = part["fde_distribution"].values()
        table.add_row(
            stratum,
            str(part["ade"]["count"]),
            f"{part['ade']['mean']:.2f} ± {part['ade']['std']:.2f}",
            f"{part['fde']['mean']:.2f} ± {part['fde']['std']:.2f}",
            f"{good:.1%}",
            f"{poor:.1%}",
        )
    console.print(table)


def cmd_generate_synthetic(args: argparse.Namespace):
    cfg = ScenarioConfig.from_json(Path(args.config)) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    stream = generate(cfg, args.count)

    collector = DatasetCollector(Path(args.output_dir))
    collector.save_fixes(stream.fixes)
    collector.save_events(stream.events)
    collector.save_geometry(stream.geometry)
    dump_json(cfg.model_dump(mode="json"), collector.directory / "scenario.json")
    console.print(
        f"[green]✓[/green] {args.count} scenarios: {len(stream.fixes)} fixes, "
        f"{len(stream.events)} events → {collector.directory}"
    )


def cmd_preprocess(args: argparse.Namespace):
    cfg = load_model_config(args, dt=args.dt, t_obs=args.tobs, n=args.horizon)
    collector = DatasetCollector(Path(args.data))
    geometry = FairwayGeometry.from_json(Path(args.geometry)) if args.geometry else collector.load_geometry()
    fixes = collector.load_fixes(args.fixes)

    samples = run_pipeline(fixes, geometry, cfg.pipeline, workers=Config.worker_count(args.deterministic))
    path = collector.save_samples(samples, args.output)
    console.print(f"[green]✓[/green] {len(samples)} samples saved to {path}")

    if args.validate:
        report = collector.validate_dataset(samples, cfg.pipeline, geometry)
        mark = "[green]✓[/green]" if report["valid"] else "[red]✗[/red]"
        console.print(f"{mark} {report['total_samples']} samples, {len(report['errors'])} errors, {len(report['warnings'])} warnings")
        for error in report["errors"][:10]:
            console.print(f"  [red]{error}[/red]")
        if not report["valid"]:
            sys.exit(1)


def cmd_train(args: argparse.Namespace):
    cfg = load_model_config(args, variant=args.variant, seed=args.seed)
    _, samples, _ = load_data_dir(Path(args.data))
    dataset = variant_dataset(samples, cfg, cfg.variant)
    train_set, test_set = split_by_trip(dataset, args.test_size, cfg.seed)
    console.print(f"[dim]{len(train_set)} training / {len(test_set)} held-out samples[/dim]")

    checkpoint_dir = Path(args.checkpoint) if args.checkpoint else EvalConfig.CHECKPOINT_DIR / f"{cfg.variant.value}-seed{cfg.seed}"
    result = train(
        train_set,
        cfg,
        epochs=args.epochs,
        checkpoint_dir=checkpoint_dir,
        deterministic=args.deterministic,
        max_steps=args.max_steps,
    )
    result.history.to_csv(checkpoint_dir / "loss_history.csv", index=False)
    last = result.history.iloc[-1]
    console.print(
        f"[green]✓[/green] {result.steps} steps, loss {last['loss']:.4f}, accuracy {last['accuracy']:.1%}, "
        f"σx {last['sigma_x']:.3f}, σy {last['sigma_y']:.3f}"
    )
    console.print(f"[bold green]✓ Checkpoint saved to:[/bold green] {result.checkpoint}")


def _evaluation_set(args: argparse.Namespace, evaluator: TrajectoryEvaluator):
    cfg = evaluator.model.cfg
    geometry, samples, encounter = load_data_dir(Path(args.data))
    dataset = variant_dataset(samples, cfg, cfg.variant)
    if args.split == "test":
        _, test_idx = trip_split_indices(dataset.groups, args.test_size, cfg.seed)
        dataset = dataset.subset(test_idx)
        encounter = None if encounter is None else encounter[test_idx]
    return geometry, dataset, encounter


def cmd_evaluate(args: argparse.Namespace):
    evaluator = TrajectoryEvaluator.from_checkpoint(Path(args.checkpoint), workers=Config.worker_count(args.deterministic))
    geometry, dataset, encounter = _evaluation_set(args, evaluator)
    report, records = evaluator.evaluate(dataset, geometry, encounter=encounter)

    problems = report.check_consistency()
    for problem in problems:
        console.print(f"[yellow]⚠ {problem}[/yellow]")

    output_dir = Path(args.output) if args.output else EvalConfig.EVAL_OUTPUT_DIR / evaluator.variant
    paths = write_report(report, output_dir)
    write_predictions(records, output_dir / "predictions.jsonl")
    print_summary(report.summary(), f"{evaluator.variant}: {len(report)} samples, horizon {report.n} × {report.dt:g} s")
    console.print(f"[dim]Label accuracy {report.metadata['label_accuracy']:.1%}, clamped tracks {report.metadata['clamped']}[/dim]")
    for name, path in paths.items():
        console.print(f"[green]✓[/green] {name}: {path}")


def cmd_predict(args: argparse.Namespace):
    evaluator = TrajectoryEvaluator.from_checkpoint(Path(args.checkpoint), workers=Config.worker_count(args.deterministic))
    geometry, dataset, encounter = _evaluation_set(args, evaluator)
    _, records = evaluator.evaluate(dataset, geometry, encounter=encounter)
    path = write_predictions(records, Path(args.output))
    console.print(f"[bold green]✓ {len(records)} predictions saved to:[/bold green] {path}")


def cmd_ablate(args: argparse.Namespace):
    cfg = load_model_config(args)
    geometry, samples, encounter = load_data_dir(Path(args.data))
    output_dir = Path(args.output) if args.output else EvalConfig.EVAL_OUTPUT_DIR / "ablation"
    variants = [Variant(v) for v in args.variants]

    result = run_ablation(
        samples,
        cfg,
        geometry,
        seeds=args.seeds,
        epochs=args.epochs,
        variants=variants,
        test_size=args.test_size,
        encounter=encounter,
        output_dir=output_dir,
        max_steps=args.max_steps,
        deterministic=args.deterministic,
        show_progress=True,
    )
    summary = summarize(result.table)

    table = Table(title="Ablation (mean over seeds)")
    table.add_column("Variant", style="cyan")
    table.add_column("Seeds", justify="right")
    table.add_column("ADE (m)", justify="right")
    table.add_column("FDE (m)", justify="right")
    table.add_column("Encounter FDE (m)", justify="right")
    for row in summary.itertuples():
        table.add_row(
            row.variant,
            str(row.seeds),
            f"{row.ade_mean_avg:.2f}",
            f"{row.fde_mean_avg:.2f} ± {row.fde_mean_seed_std:.2f}",
            f"{row.enc_fde_mean_avg:.2f} ± {row.enc_fde_mean_seed_std:.2f}",
        )
    console.print(table)

    first_seed = args.seeds[0]
    reports = {v.value: result.reports[(v.value, first_seed)] for v in variants}
    histories = {v.value: result.histories[(v.value, first_seed)] for v in variants}
    visualizations = TrajectoryVisualizer(output_dir).generate_all_visualizations(result.curves, reports, histories)
    report_path = ReportGenerator(output_dir).generate_markdown_report(
        result.table,
        summary,
        visualizations,
        metadata={
            "Samples": len(samples),
            "Epochs": args.epochs,
            "Step length": f"{cfg.dt:g} s",
            "Horizon": f"{cfg.n} steps",
        },
    )
    console.print(f"[bold green]✓ Report saved to:[/bold green] {report_path}")


def cmd_sweep(args: argparse.Namespace):
    cfg = load_model_config(args, variant=args.variant)
    collector = DatasetCollector(Path(args.data))
    geometry = collector.load_geometry()
    fixes = collector.load_fixes()
    events = collector.load_events() if (collector.directory / "events.jsonl").exists() else None

    curves = resolution_sweep(
        fixes,
        geometry,
        cfg,
        seeds=args.seeds,
        epochs=args.epochs,
        events=events,
        variant=cfg.variant,
        max_steps=args.max_steps,
        deterministic=args.deterministic,
    )
    visualizer = TrajectoryVisualizer(Path(args.output) if args.output else EvalConfig.EVAL_OUTPUT_DIR / "resolution")
    csv_path = visualizer.output_dir / "fde_resolution.csv"
    curves.to_csv(csv_path, index=False)
    png_path = visualizer.plot_resolution_curves(curves)
    console.print(f"[green]✓[/green] curves: {csv_path}")
    console.print(f"[green]✓[/green] figure: {png_path}")


def cmd_plot_fde(args: argparse.Namespace):
    curves = pd.read_csv(args.curves)
    visualizer = TrajectoryVisualizer(Path(args.output) if args.output else Path(args.curves).parent)
    for name, path in visualizer.plot_fde(curves, args.stem).items():
        console.print(f"[green]✓[/green] {name}: {path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Fairway Trajectory Transformer - vessel trajectory prediction in the navigation-area frame",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Generate synthetic encounter traffic and preprocess it
  uv run main.py generate-synthetic --config scenario.json --count 200 --seed 7 --output-dir data/synthetic
  uv run main.py preprocess --data data/synthetic --config model.cfg --validate
  uv run main.py preprocess --data data/synthetic --dt 90 --tobs 3 --horizon 3 --output samples_90s.jsonl

  # Train and evaluate one variant
  uv run main.py train --data data/synthetic --variant sosp-ct --epochs 20 --deterministic
  uv run main.py evaluate --checkpoint eval_output/checkpoints/sosp-ct-seed0 --data data/synthetic

  # Compare CT, sp-CT and sosp-CT over three seeds
  uv run main.py ablate --data data/synthetic --seeds 0 1 2 --epochs 20

  # Re-plot horizon curves
  uv run main.py plot-fde --curves eval_output/ablation/fde_horizon_curves.csv
        """,
    )
    parser.add_argument("--verbose", action="store_true", help="Print full tracebacks on errors")
    parser.add_argument("--deterministic", action="store_true", default=None, help="Single-threaded reductions and decoding")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p: argparse.ArgumentParser):
        p.add_argument("-c", "--config", type=str, help="Flat key-value model configuration file")

    def add_training(p: argparse.ArgumentParser):
        p.add_argument("--epochs", type=int, default=10, help="Training epochs per run")
        p.add_argument("--max-steps", type=int, help="Stop each run after this many optimizer steps")
        p.add_argument("--test-size", type=float, default=0.2, help="Share of target trips held out")

    p = sub.add_parser("generate-synthetic", help="Simulate waterway traffic with rule-based sidestepping")
    p.add_argument("--config", type=str, help="Scenario configuration JSON")
    p.add_argument("--count", type=int, default=100, help="Number of scenarios")
    p.add_argument("--seed", type=int, help="Override the scenario seed")
    p.add_argument("--output-dir", type=str, default=str(EvalConfig.DATA_DIR / "synthetic"))
    p.set_defaults(func=cmd_generate_synthetic)

    p = sub.add_parser("preprocess", help="Turn raw fixes into training samples")
    add_config(p)
    p.add_argument("--data", type=str, required=True, help="Data directory with fixes.jsonl and geometry.json")
    p.add_argument("--fixes", type=str, default="fixes.jsonl")
    p.add_argument("--geometry", type=str, help="Geometry JSON (default: <data>/geometry.json)")
    p.add_argument("--dt", type=float, help="Resampling interval in s (default from the config file)")
    p.add_argument("--tobs", type=int, help="Observed steps per sample")
    p.add_argument("--horizon", type=int, help="Predicted steps per sample")
    p.add_argument("--output", type=str, default="samples.jsonl")
    p.add_argument("--validate", action="store_true", help="Re-check every sample after extraction")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="Train one variant with teacher forcing")
    add_config(p)
    add_training(p)
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoint", type=str, help="Checkpoint directory")
    p.set_defaults(func=cmd_train)

    for name, func, help_text in (
        ("evaluate", cmd_evaluate, "Greedy-decode and score a checkpoint"),
        ("predict", cmd_predict, "Write greedy predictions as JSONL"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--checkpoint", type=str, required=True)
        p.add_argument("--data", type=str, required=True)
        p.add_argument("--split", choices=["test", "all"], default="test" if name == "evaluate" else "all")
        p.add_argument("--test-size", type=float, default=0.2)
        p.add_argument("--output", type=str, required=name == "predict")
        p.set_defaults(func=func)

    p = sub.add_parser("ablate", help="Train and compare variants over several seeds")
    add_config(p)
    add_training(p)
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--variants", nargs="+", choices=[v.value for v in Variant], default=[v.value for v in Variant])
    p.add_argument("--output", type=str)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="Re-run preprocessing and training at 30/60/90 s resolution")
    add_config(p)
    p.add_argument("--data", type=str, required=True, help="Data directory with fixes.jsonl and geometry.json")
    p.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.SOSP_CT.value)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--output", type=str)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot-fde", help="Plot FDE-over-horizon curves from a CSV")
    p.add_argument("--curves", type=str, required=True)
    p.add_argument("--stem", type=str, default="fde_horizon")
    p.add_argument("--output", type=str)
    p.set_defaults(func=cmd_plot_fde)

    return parser


def main():
    """Main entry point."""
    parser = build_parser()
    args = parser.parse_args()

    # Validate configuration
    try:
        Config.validate()
    except ValueError as e:
        console.print(f"[bold red]✗ Configuration Error:[/bold red] {e}")
        sys.exit(1)

    print_banner()

    try:
        args.func(args)
    except (TrajectoryError, ValueError, FileNotFoundError) as e:
        if args.verbose:
            console.print_exception()
        console.print(f"\n[bold red]✗ Error:[/bold red] {e}")
        sys.exit(1)
    except KeyboardInterrupt:
        console.print("\n[yellow]Interrupted[/yellow]")
        sys.exit(130)


if __name__ == "__main__":
    main()
