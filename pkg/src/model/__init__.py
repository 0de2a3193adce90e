"""Tensor numerics, the social tensor transformer and the classification transformer variants."""

from src.model.checkpoint import load_checkpoint, save_checkpoint
from src.model.config import ModelConfig, Variant
from src.model.optim import Adam, adam_step, clip_grad_norm
from src.model.stt import SocialTensorTransformer
from src.model.transformer import ClassificationTransformer, LossWeights, build_variant, uncertainty_weighted

__all__ = [
    "ModelConfig",
    "Variant",
    "Adam",
    "adam_step",
    "clip_grad_norm",
    "SocialTensorTransformer",
    "ClassificationTransformer",
    "LossWeights",
    "build_variant",
    "uncertainty_weighted",
    "save_checkpoint",
    "load_checkpoint",
]
