"""Rich-backed logging shared by all library modules."""

import logging

from rich.console import Console
from rich.logging import RichHandler

from src.utils.config import Config

# stderr keeps stdout free for JSONL piping
console = Console(stderr=True)

_ROOT = "fairway"
_configured = False


def _configure() -> None:
    global _configured
    root = logging.getLogger(_ROOT)
    root.setLevel(logging.DEBUG if Config.DEBUG else logging.INFO)
    handler = RichHandler(console=console, show_path=Config.DEBUG, rich_tracebacks=True)
    handler.setFormatter(logging.Formatter("%(message)s", datefmt="[%X]"))
    root.addHandler(handler)
    root.propagate = False
    _configured = True


def get_logger(name: str) -> logging.Logger:
    """Return a child logger of the package root, configuring it on first use."""
    if not _configured:
        _configure()
    short = name.removeprefix("src.")
    return logging.getLogger(f"{_ROOT}.{short}")
