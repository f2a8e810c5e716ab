"""
Utility functions for reproducibility and standardized result files.
"""
import hashlib
import json
import random
from pathlib import Path

import numpy as np
import torch

from .exceptions import MissingArtifactError

SEED_MODULUS = 2 ** 31 - 1


def seed_everything(seed):
    """
    Seed python, numpy and torch and switch torch to deterministic kernels.

    Args:
        seed: Integer experiment seed

    Returns:
        np.random.Generator seeded with the same value
    """
    seed = int(seed)
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)
    torch.backends.cudnn.benchmark = False
    return np.random.default_rng(seed)


def derive_seed(seed, *keys):
    """
    Stable child seed for (seed, key, key, ...), e.g. (seed, "epoch", 3, "item", 17).

    Uses SHA-256 rather than hash() so values do not change between processes.
    """
    text = ":".join(str(part) for part in (seed, *keys))
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % SEED_MODULUS


def torch_generator(seed):
    generator = torch.Generator()
    generator.manual_seed(int(seed))
    return generator


def parameter_checksum(module):
    """
    SHA-256 over a module's state dict (names, dtypes, shapes and raw bytes).

    Args:
        module: torch.nn.Module or a state dict

    Returns:
        Hex digest string
    """
    state = module.state_dict() if hasattr(module, "state_dict") else module
    sha = hashlib.sha256()
    for name in sorted(state):
        tensor = state[name].detach().cpu().contiguous()
        sha.update(name.encode("utf-8"))
        sha.update(str(tensor.dtype).encode("utf-8"))
        sha.update(str(tuple(tensor.shape)).encode("utf-8"))
        sha.update(tensor.numpy().tobytes() if tensor.dtype != torch.bfloat16 else tensor.float().numpy().tobytes())
    return sha.hexdigest()


def _default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "value"):
        return value.value
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def dumps(data):
    """Deterministic JSON text (sorted keys) for result files."""
    return json.dumps(data, sort_keys=True, indent=2, default=_default)


def write_json(data, path):
    """
    Write a result document.

    Args:
        data: JSON-serializable structure (numpy scalars and enums allowed)
        path: Destination file; parent directories are created

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(data) + "\n", encoding="utf-8")
    return path


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"File not found: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def append_jsonl(record, path):
    """Append one sorted-key JSON record as a line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True, default=_default) + "\n")
    return path


def read_jsonl(path):
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"File not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
