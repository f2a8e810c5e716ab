"""
Reading, overriding and writing experiment descriptors.
"""
import logging
from dataclasses import asdict, fields, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, get_type_hints

import yaml
from django.conf import settings

from core.exceptions import ConfigurationError, MissingArtifactError, SutureLabError

from . import config
from .schema import ExperimentConfig

logger = logging.getLogger(__name__)


def build_section(cls, data, prefix: str = ""):
    """
    Instantiate dataclass `cls` from a mapping, recursing into nested
    dataclass fields. Unknown keys are rejected with their dotted path.
    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{prefix or 'descriptor'} must be a mapping, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(f"{prefix}.{key}" if prefix else str(key) for key in data if key not in known)
    if unknown:
        raise ConfigurationError(f"Unknown configuration key {unknown[0]}", errors={"unknown_keys": unknown})

    hints = get_type_hints(cls)
    values = {}
    for name, value in data.items():
        path = f"{prefix}.{name}" if prefix else name
        hint = hints.get(name)
        if isinstance(hint, type) and is_dataclass(hint):
            value = build_section(hint, value, path)
        values[name] = value
    try:
        return cls(**values)
    except ConfigurationError:
        raise
    except (SutureLabError, TypeError, ValueError) as e:
        message = e.message if isinstance(e, SutureLabError) else str(e)
        raise ConfigurationError(f"Invalid {prefix or 'descriptor'}: {message}")


def _set_dotted(tree: dict, dotted: str, value):
    keys = dotted.split(".")
    node = tree
    for key in keys[:-1]:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigurationError(f"Cannot override {dotted}: {key} is not a section")
        node = child
    node[keys[-1]] = value


def parse_override(text: str):
    """`section.key=value` with the value read as a YAML scalar or flow collection."""
    if "=" not in text:
        raise ConfigurationError(f"Override must look like section.key=value, got {text!r}")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigurationError(f"Override has an empty key: {text!r}")
    try:
        return key, yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Could not parse override {text!r}: {str(e)}")


def read_descriptor(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"Experiment descriptor not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Could not parse {path}: {str(e)}")
    return data or {}


def load_experiment(
    path=None,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
    fold: Optional[int] = None,
    device: Optional[str] = None,
) -> ExperimentConfig:
    """
    Descriptor file + `--set` overrides + universal flags, fully validated.

    Raises:
        ConfigurationError: unknown keys or invalid values anywhere in the tree
        MissingArtifactError: the descriptor file does not exist
    """
    tree = read_descriptor(path) if path else {}
    for text in overrides:
        key, value = parse_override(text)
        _set_dotted(tree, key, value)
    if seed is not None:
        _set_dotted(tree, "experiment.seed", int(seed))
    if fold is not None:
        _set_dotted(tree, "experiment.folds", [int(fold)])
    if device is None and not (tree.get("experiment") or {}).get("device"):
        device = getattr(settings, "COMPUTE_DEVICE", "cpu")
    if device is not None:
        _set_dotted(tree, "experiment.device", device)
    cfg = build_section(ExperimentConfig, tree)
    logger.info(f"Loaded experiment {cfg.experiment.id!r} (seed {cfg.seed}, device {cfg.device})")
    return cfg


def _plain(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    return value


def to_plain(cfg: ExperimentConfig) -> dict:
    """Resolved descriptor as plain YAML-safe data, every default expanded."""
    return _plain(asdict(cfg))


def write_resolved(cfg: ExperimentConfig, out_dir) -> Path:
    """Write resolved_config.yaml (which carries the seed) into `out_dir`."""
    path = Path(out_dir) / config.RESOLVED_CONFIG_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(to_plain(cfg), fh, sort_keys=True, default_flow_style=False)
    return path


def workspace_path(value) -> Path:
    """Resolve a descriptor path against WORKSPACE_ROOT."""
    path = Path(value)
    return path if path.is_absolute() else Path(settings.WORKSPACE_ROOT) / path
