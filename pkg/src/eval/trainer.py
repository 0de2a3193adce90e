"""Teacher-forced training of the classification transformer."""

import contextlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn
from threadpoolctl import threadpool_limits

from src.data.dataset import TrajectoryDataset
from src.model.checkpoint import save_checkpoint
from src.model.config import ModelConfig
from src.model.optim import Adam, clip_grad_norm
from src.model.transformer import ClassificationTransformer, build_variant
from src.utils.config import Config
from src.utils.errors import NonFinite, VariantMismatch
from src.utils.logger import console, get_logger

logger = get_logger(__name__)


@dataclass
class TrainResult:
    """Trained model, its per-epoch loss history and the checkpoint it was saved to."""
    model: ClassificationTransformer
    history: pd.DataFrame
    checkpoint: Optional[Path] = None
    steps: int = 0


def check_compatible(dataset: TrajectoryDataset, cfg: ModelConfig) -> None:
    """
    Raise if a dataset was not built for the configured variant.

    Raises:
        VariantMismatch: Wrong feature frame or social tensor presence
        ValueError: Different codec or window layout
    """
    variant = cfg.variant
    if dataset.frame is not variant.frame:
        raise VariantMismatch(f"{variant.value} expects {variant.frame.value} labels, dataset has {dataset.frame.value}")
    if dataset.has_social != variant.social:
        raise VariantMismatch(f"{variant.value} {'needs' if variant.social else 'takes no'} social tensors")
    if not dataset.codec.matches(cfg.codec()):
        raise ValueError("dataset codec differs from the model configuration")
    if dataset.t_obs != cfg.t_obs or dataset.n != cfg.n:
        raise ValueError(f"dataset window {dataset.t_obs}+{dataset.n} differs from model {cfg.t_obs}+{cfg.n}")
    if variant.social and dataset.grid != cfg.grid:
        raise ValueError("dataset grid differs from the model configuration")


def batch_inputs(dataset: TrajectoryDataset, idx: np.ndarray) -> Dict[str, Optional[np.ndarray]]:
    return {
        "obs_x": dataset.obs_x[idx],
        "obs_y": dataset.obs_y[idx],
        "context": dataset.context[idx],
        "social_values": None if dataset.social_values is None else dataset.social_values[idx],
        "social_mask": None if dataset.social_mask is None else dataset.social_mask[idx],
    }


def train_step(
    model: ClassificationTransformer,
    optimizer: Adam,
    dataset: TrajectoryDataset,
    idx: np.ndarray,
    clip_norm: float,
) -> Dict[str, float]:
    """
    One optimizer step on a batch.

    Raises:
        NonFinite: If the loss, a gradient or an updated parameter is not finite
    """
    inputs = batch_inputs(dataset, idx)
    fut_x, fut_y = dataset.fut_x[idx], dataset.fut_y[idx]

    optimizer.zero_grad()
    lx, ly = model.teacher_forced(
        inputs["obs_x"], inputs["obs_y"], inputs["context"], fut_x, fut_y,
        inputs["social_values"], inputs["social_mask"],
    )
    loss, loss_x, loss_y = model.dual_loss(lx, ly, fut_x, fut_y)
    if not np.isfinite(loss.item()):
        raise NonFinite("non-finite loss", step=optimizer.steps + 1)
    loss.backward()
    grad_norm = clip_grad_norm(optimizer.params, clip_norm)
    optimizer.step()

    correct = (lx.data.argmax(axis=-1) == fut_x).sum() + (ly.data.argmax(axis=-1) == fut_y).sum()
    return {
        "loss": loss.item(),
        "loss_x": loss_x,
        "loss_y": loss_y,
        "grad_norm": grad_norm,
        "correct": float(correct),
        "labels": float(2 * fut_x.size),
    }


def train(
    dataset: TrajectoryDataset,
    cfg: ModelConfig,
    epochs: int = 10,
    seed: Optional[int] = None,
    checkpoint_dir: Optional[Path] = None,
    deterministic: Optional[bool] = None,
    max_steps: Optional[int] = None,
    show_progress: bool = True,
) -> TrainResult:
    """
    Minimize the uncertainty-weighted dual cross-entropy with teacher forcing.

    Args:
        dataset: Training data built for cfg.variant
        cfg: Model configuration
        epochs: Passes over the data
        seed: Overrides cfg.seed for initialization and shuffling
        checkpoint_dir: Save the final model here when given
        deterministic: Force single-threaded BLAS (default from Config)
        max_steps: Stop after this many optimizer steps
        show_progress: Render a progress bar

    Returns:
        TrainResult with one history row per epoch

    Raises:
        NonFinite: With the index of the offending optimizer step
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    check_compatible(dataset, cfg)
    deterministic = Config.DETERMINISTIC if deterministic is None else deterministic

    model = build_variant(cfg)
    optimizer = Adam(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    batches_per_epoch = -(-len(dataset) // cfg.batch_size)
    total = epochs * batches_per_epoch if max_steps is None else min(max_steps, epochs * batches_per_epoch)
    logger.info(
        f"Training {cfg.variant.value} ({model.num_parameters()} parameters) on {len(dataset)} samples, "
        f"{epochs} epochs"
    )

    rows: List[Dict[str, float]] = []
    limits = threadpool_limits(limits=1) if deterministic else contextlib.nullcontext()
    progress = Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("{task.completed}/{task.total}"),
        TimeElapsedColumn(),
        console=console,
        disable=not show_progress,
    )
    with limits, progress:
        task = progress.add_task(f"train {cfg.variant.value}", total=total)
        done = False
        for epoch in range(1, epochs + 1):
            sums = {"loss": 0.0, "loss_x": 0.0, "loss_y": 0.0, "correct": 0.0, "labels": 0.0}
            batches = 0
            for idx in dataset.batches(cfg.batch_size, rng):
                stats = train_step(model, optimizer, dataset, idx, cfg.clip_norm)
                for key in sums:
                    sums[key] += stats[key]
                batches += 1
                progress.advance(task)
                if max_steps is not None and optimizer.steps >= max_steps:
                    done = True
                    break

            row = {
                "epoch": epoch,
                "steps": optimizer.steps,
                "loss": sums["loss"] / batches,
                "loss_x": sums["loss_x"] / batches,
                "loss_y": sums["loss_y"] / batches,
                "accuracy": sums["correct"] / sums["labels"],
                "sigma_x": model.loss_weights.sigma_x,
                "sigma_y": model.loss_weights.sigma_y,
            }
            rows.append(row)
            logger.debug(
                f"epoch {epoch}: loss {row['loss']:.4f} (x {row['loss_x']:.4f}, y {row['loss_y']:.4f}), "
                f"accuracy {row['accuracy']:.3f}"
            )
            if done:
                break

    history = pd.DataFrame(rows)
    checkpoint = save_checkpoint(model, checkpoint_dir) if checkpoint_dir is not None else None
    return TrainResult(model=model, history=history, checkpoint=checkpoint, steps=optimizer.steps)
