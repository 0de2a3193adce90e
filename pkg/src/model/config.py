"""Model hyperparameters."""

from enum import Enum
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple

from pydantic import BaseModel, Field, model_validator

from src.data.dataset import FeatureFrame
from src.data.pipeline import PipelineConfig
from src.data.social_tensor import GridSpec
from src.navigation.codec import LabelCodec
from src.utils.config import read_flat_config


class Variant(str, Enum):
    """Ablation variants."""
    CT = "ct"  # heading-frame dislocations, no social context
    SP_CT = "sp-ct"  # navigation-frame dislocations
    SOSP_CT = "sosp-ct"  # navigation frame plus social tensor fusion

    @property
    def frame(self) -> FeatureFrame:
        return FeatureFrame.HEADING if self is Variant.CT else FeatureFrame.NAVIGATION

    @property
    def social(self) -> bool:
        return self is Variant.SOSP_CT


_RANGE_KEYS = ("lateral_range", "longitudinal_range")


class ModelConfig(BaseModel):
    """All hyperparameters of one model; pipeline timing follows the model's window layout."""

    variant: Variant = Variant.SOSP_CT
    d: int = Field(default=32, ge=4, description="Embedding width")
    heads: int = Field(default=4, ge=1)
    layers: int = Field(default=1, ge=1, description="Encoder and decoder depth")
    stt_layers: int = Field(default=1, ge=1, description="Social tensor encoder depth")
    d_ff: int = Field(default=64, ge=1)

    t_obs: int = Field(default=5, ge=1)
    n: int = Field(default=5, ge=1)
    dt: float = Field(default=60.0, gt=0)

    n_lateral: int = Field(default=21, ge=2)
    n_longitudinal: int = Field(default=41, ge=2)
    lateral_range: Tuple[float, float] = (-15.0, 15.0)
    longitudinal_range: Tuple[float, float] = (0.0, 200.0)

    context_count: int = Field(default=5, ge=1)
    context_spacing: float = Field(default=200.0, gt=0)

    grid: GridSpec = Field(default_factory=GridSpec)
    pipeline: PipelineConfig = Field(default_factory=PipelineConfig)

    lr: float = Field(default=3e-4, gt=0)
    batch_size: int = Field(default=32, ge=1)
    clip_norm: float = Field(default=1.0, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check(self):
        if self.t_obs != self.n:
            raise ValueError("t_obs and n must be identical")
        if self.d % self.heads:
            raise ValueError(f"d={self.d} is not divisible by heads={self.heads}")
        if self.d % 4:
            raise ValueError("d must be divisible by 4 for the 2D positional encoding")
        for name in _RANGE_KEYS:
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must be ascending")

        # the pipeline cuts windows with the model's layout
        self.pipeline = self.pipeline.model_copy(
            update={
                "t_obs": self.t_obs,
                "n": self.n,
                "dt": self.dt,
                "context_count": self.context_count,
                "context_spacing": self.context_spacing,
            }
        )
        if self.grid.ahead_span > self.pipeline.ahead_km * 1000.0 + 1e-9:
            raise ValueError("grid reaches further ahead than the neighbor selection window")
        if self.grid.behind_span > self.pipeline.behind_km * 1000.0 + 1e-9:
            raise ValueError("grid reaches further behind than the neighbor selection window")
        return self

    @property
    def context_dim(self) -> int:
        return 2 * self.context_count

    def codec(self) -> LabelCodec:
        return LabelCodec.uniform(
            self.n_lateral, self.lateral_range, self.n_longitudinal, self.longitudinal_range
        )

    @classmethod
    def from_flat(cls, values: Mapping[str, str], **overrides: Any) -> "ModelConfig":
        """
        Build from flat key-value pairs.

        Nested fields use a `grid.` or `pipeline.` prefix; ranges are written
        as two comma-separated numbers.
        """
        data: Dict[str, Any] = {}
        for key, raw in values.items():
            value: Any = raw
            if key in _RANGE_KEYS:
                value = tuple(float(part) for part in raw.split(","))
            if "." in key:
                section, name = key.split(".", 1)
                data.setdefault(section, {})[name] = value
            else:
                data[key] = value
        data.update(overrides)
        return cls.model_validate(data)

    @classmethod
    def from_file(cls, path: Path, **overrides: Any) -> "ModelConfig":
        return cls.from_flat(read_flat_config(path), **overrides)
