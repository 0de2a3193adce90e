"""Configuration management for the trajectory prediction toolkit."""

import os
from pathlib import Path
from typing import Dict, Optional

from dotenv import dotenv_values, load_dotenv

# Load environment variables from .env file
load_dotenv()


def _flag(name: str, default: str = "false") -> bool:
    return os.getenv(name, default).lower() in ("1", "true", "yes")


class Config:
    """Process-level settings read from the environment."""

    # Debug Configuration
    DEBUG = _flag("TRAJ_DEBUG")

    # Worker threads for evaluation and BLAS
    NUM_THREADS = int(os.getenv("TRAJ_NUM_THREADS", "1"))

    # Forces single-threaded reductions everywhere
    DETERMINISTIC = _flag("TRAJ_DETERMINISTIC")

    # Where artifacts (checkpoints, CSVs, figures) are written
    OUTPUT_DIR = Path(os.getenv("TRAJ_OUTPUT_DIR", "eval_output"))

    @classmethod
    def validate(cls):
        """Validate environment-derived settings."""
        problems = []

        if cls.NUM_THREADS < 1:
            problems.append(f"TRAJ_NUM_THREADS must be >= 1 (got {cls.NUM_THREADS})")

        if problems:
            raise ValueError(
                f"Invalid configuration: {'; '.join(problems)}. "
                f"Please fix them in your .env file."
            )

        return True

    @classmethod
    def worker_count(cls, deterministic: Optional[bool] = None) -> int:
        """Number of worker threads, forced to one in deterministic mode."""
        if deterministic is None:
            deterministic = cls.DETERMINISTIC
        return 1 if deterministic else cls.NUM_THREADS


def read_flat_config(path: Path) -> Dict[str, str]:
    """
    Read a flat key-value config file (dotenv syntax).

    Args:
        path: Path to the file

    Returns:
        Mapping of keys to raw string values; keys without a value are dropped
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    return {key: value for key, value in dotenv_values(path).items() if value is not None}
