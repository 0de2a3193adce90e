"""Domain errors raised across the package."""

from typing import Optional


class TrajectoryError(Exception):
    """Base class for all errors raised by this package."""


class ProjectionOutOfRange(TrajectoryError, ValueError):
    """A point or rollout lies beyond the longitudinal span of the fairway geometry."""


class IndexOutOfRange(TrajectoryError, IndexError):
    """A class label index is outside the codec's label set."""


class TooShort(TrajectoryError, ValueError):
    """A trip has too few fixes for the requested operation."""


class DegenerateAttention(TrajectoryError, ValueError):
    """A query row has no unmasked key to attend to."""


class NonFinite(TrajectoryError, ArithmeticError):
    """A parameter, gradient or loss became NaN or infinite."""

    def __init__(self, message: str, step: Optional[int] = None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class VariantMismatch(TrajectoryError, ValueError):
    """Social tensor presence contradicts the model variant."""


class ManifestMismatch(TrajectoryError, ValueError):
    """Checkpoint manifest is incompatible with the dataset being evaluated."""
