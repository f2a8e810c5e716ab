"""
Checkpoint container shared by every training stage.
"""
from enum import Enum
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import torch
from loguru import logger

from core.exceptions import CheckpointError, MissingArtifactError
from detector.network import DetectorConfig, DetectorModel, build_detector
from translation.networks import Direction, GanConfig, Generator, build_gan_models

from .. import config


def _plain_state(value):
    """Reduce config and training state to containers, scalars and tensors."""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return torch.from_numpy(value.copy())
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, dict):
        return {k: _plain_state(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return type(value)(_plain_state(v) for v in value)
    return value


def save_checkpoint(
    path,
    kind: str,
    models: Dict[str, dict],
    model_config: dict,
    epoch: int,
    seed: int,
    optimizers: Optional[Dict[str, dict]] = None,
    schedulers: Optional[Dict[str, dict]] = None,
    extra: Optional[dict] = None,
) -> Path:
    """
    Write a checkpoint.

    Args:
        path: Destination file
        kind: "detector" or "gan"
        models: name -> state_dict
        model_config: Architecture settings needed to rebuild the models
        epoch: Last completed epoch (0-based)
        seed: Experiment seed
        optimizers: name -> optimizer state_dict
        schedulers: name -> scheduler state_dict
        extra: Anything else to restore (training config, replay pools, descriptor)

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    container = {
        "format": config.CHECKPOINT_FORMAT,
        "version": config.CHECKPOINT_VERSION,
        "kind": kind,
        "epoch": int(epoch),
        "seed": int(seed),
        "config": _plain_state(model_config),
        "models": models,
        "optimizers": optimizers or {},
        "schedulers": _plain_state(schedulers or {}),
        "extra": _plain_state(extra or {}),
    }
    tmp_path = path.with_suffix(path.suffix + ".tmp")
    torch.save(container, tmp_path)
    tmp_path.replace(path)
    logger.debug("Saved {} checkpoint (epoch {}) to {}", kind, epoch, path)
    return path


def load_checkpoint(path, kind: Optional[str] = None) -> dict:
    """
    Read and validate a checkpoint container.

    Only tensors and plain containers are unpickled; a file carrying any
    other object is rejected as unreadable.

    Raises:
        MissingArtifactError: file absent
        CheckpointError: unreadable, foreign format, other version or wrong kind
    """
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"Checkpoint not found: {path}")
    try:
        container = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(f"Could not read checkpoint {path}: {str(e)}")

    if not isinstance(container, dict) or container.get("format") != config.CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {config.CHECKPOINT_FORMAT} file")
    if container.get("version") != config.CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path} has checkpoint version {container.get('version')}, expected {config.CHECKPOINT_VERSION}"
        )
    if kind is not None and container.get("kind") != kind:
        raise CheckpointError(f"{path} holds a {container.get('kind')} checkpoint, expected {kind}")
    return container


def load_detector(path, device="cpu", freeze: bool = True) -> DetectorModel:
    """Rebuild a detector from its checkpoint; frozen unless asked otherwise."""
    container = load_checkpoint(path, kind=config.STAGE_DETECTOR)
    model = build_detector(DetectorConfig.from_dict(container["config"]))
    try:
        model.load_state_dict(container["models"]["detector"])
    except (KeyError, RuntimeError) as e:
        raise CheckpointError(f"Detector weights in {path} do not fit its config: {str(e)}")
    model.to(device)
    return model.freeze() if freeze else model


def load_generator(path, direction, device="cpu") -> Generator:
    """The generator for `direction` from a GAN checkpoint, in eval mode."""
    direction = Direction(direction)
    container = load_checkpoint(path, kind=config.STAGE_GAN)
    models = build_gan_models(GanConfig(**container["config"]))
    generator = models.generator_for(direction)
    try:
        generator.load_state_dict(container["models"][f"g_{direction.value}"])
    except (KeyError, RuntimeError) as e:
        raise CheckpointError(f"Generator weights in {path} do not fit its config: {str(e)}")
    return generator.to(device).eval()
