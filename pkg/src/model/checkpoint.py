"""
Checkpoint directories: `manifest.json` plus `weights.bin`.

The manifest lists every parameter (name, shape, offset in values) together
with the model config, codec edges, grid layout and feature frame; the blob
holds all parameters as little-endian float64 in manifest order.
"""

import json
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np

from src.model.config import ModelConfig
from src.model.transformer import ClassificationTransformer, build_variant
from src.navigation.codec import LabelCodec
from src.utils.errors import ManifestMismatch
from src.utils.logger import get_logger

logger = get_logger(__name__)

FORMAT = "fairway-checkpoint/1"
MANIFEST = "manifest.json"
WEIGHTS = "weights.bin"
_DTYPE = np.dtype("<f8")


def build_manifest(model: ClassificationTransformer) -> Dict[str, Any]:
    entries = []
    offset = 0
    for name, p in model.named_parameters():
        entries.append({"name": name, "shape": list(p.shape), "offset": offset})
        offset += int(p.data.size)
    cfg = model.cfg
    return {
        "format": FORMAT,
        "variant": model.variant.value,
        "frame": model.variant.frame.value,
        "config": cfg.model_dump(mode="json"),
        "codec": cfg.codec().to_dict(),
        "grid": cfg.grid.model_dump(mode="json"),
        "parameters": entries,
        "total": offset,
    }


def save_checkpoint(model: ClassificationTransformer, directory: Path) -> Path:
    """
    Write the model to a checkpoint directory.

    Args:
        model: Model to save
        directory: Target directory (created if missing)

    Returns:
        The directory
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = build_manifest(model)

    blob = np.concatenate([p.data.reshape(-1) for _, p in model.named_parameters()]).astype(_DTYPE)
    (directory / WEIGHTS).write_bytes(blob.tobytes())
    with open(directory / MANIFEST, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)

    logger.info("saved %s checkpoint (%d values) to %s", manifest["variant"], manifest["total"], directory)
    return directory


def read_manifest(directory: Path) -> Dict[str, Any]:
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no checkpoint manifest at {path}")
    with open(path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format") != FORMAT:
        raise ManifestMismatch(f"unsupported checkpoint format {manifest.get('format')!r}")
    return manifest


def load_checkpoint(directory: Path) -> Tuple[ClassificationTransformer, Dict[str, Any]]:
    """
    Rebuild a model from a checkpoint directory.

    Returns:
        (model, manifest)

    Raises:
        ManifestMismatch: If the manifest disagrees with the rebuilt model or the blob size
    """
    directory = Path(directory)
    manifest = read_manifest(directory)
    cfg = ModelConfig.model_validate(manifest["config"])
    model = build_variant(cfg)

    if not LabelCodec.from_dict(manifest["codec"]).matches(cfg.codec()):
        raise ManifestMismatch("codec edges in the manifest disagree with its config")

    blob = np.frombuffer((directory / WEIGHTS).read_bytes(), dtype=_DTYPE)
    if blob.size != manifest["total"]:
        raise ManifestMismatch(f"weights blob holds {blob.size} values, manifest expects {manifest['total']}")

    own = dict(model.named_parameters())
    listed = [entry["name"] for entry in manifest["parameters"]]
    if listed != list(own):
        raise ManifestMismatch("parameter list in the manifest does not match the model architecture")

    state = {}
    for entry in manifest["parameters"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape, dtype=np.int64))
        state[entry["name"]] = blob[entry["offset"]:entry["offset"] + size].reshape(shape)
    model.load_state_dict(state)
    return model, manifest
