"""
Typed settings for the training stages.
"""
from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

from core.augmentation import AugmentationConfig
from core.exceptions import DataValidationError
from detector import config as detector_config
from translation import config as translation_config


def _check_optimizer(cfg):
    if cfg.epochs < 0:
        raise DataValidationError(f"epochs must be non-negative, got {cfg.epochs}")
    if cfg.batch_size < 1:
        raise DataValidationError(f"batch_size must be positive, got {cfg.batch_size}")
    if not cfg.learning_rate > 0:
        raise DataValidationError(f"learning_rate must be positive, got {cfg.learning_rate}")
    cfg.adam_betas = tuple(float(b) for b in cfg.adam_betas)
    if len(cfg.adam_betas) != 2 or any(not 0.0 <= b < 1.0 for b in cfg.adam_betas):
        raise DataValidationError(f"adam_betas must be two values in [0, 1), got {cfg.adam_betas}")


@dataclass
class DetectorTrainingConfig:
    epochs: int = detector_config.EPOCHS
    batch_size: int = detector_config.BATCH_SIZE
    learning_rate: float = detector_config.LEARNING_RATE
    plateau_factor: float = detector_config.PLATEAU_FACTOR
    plateau_patience: int = detector_config.PLATEAU_PATIENCE
    adam_betas: Tuple[float, float] = detector_config.ADAM_BETAS
    adam_eps: float = detector_config.ADAM_EPS
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    seed: int = 0
    device: str = "cpu"

    def __post_init__(self):
        _check_optimizer(self)
        if isinstance(self.augmentation, dict):
            self.augmentation = AugmentationConfig(**self.augmentation)
        if not 0.0 < self.plateau_factor < 1.0:
            raise DataValidationError(f"plateau_factor must lie in (0, 1), got {self.plateau_factor}")
        if self.plateau_patience < 0:
            raise DataValidationError(f"plateau_patience must be non-negative, got {self.plateau_patience}")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["adam_betas"] = list(self.adam_betas)
        data["augmentation"] = self.augmentation.to_dict()
        return data


@dataclass
class GanTrainingConfig:
    epochs: int = translation_config.EPOCHS
    batch_size: int = translation_config.BATCH_SIZE
    learning_rate: float = translation_config.LEARNING_RATE
    adam_betas: Tuple[float, float] = translation_config.ADAM_BETAS
    adam_eps: float = translation_config.ADAM_EPS
    buffer_capacity: int = translation_config.BUFFER_CAPACITY
    buffer_swap_probability: float = translation_config.BUFFER_SWAP_PROBABILITY
    heatmap_sigma: float = detector_config.HEATMAP_SIGMA
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig.for_translation)
    keep_every_epoch: bool = False
    seed: int = 0
    device: str = "cpu"
    max_steps_per_epoch: Optional[int] = None

    def __post_init__(self):
        _check_optimizer(self)
        if isinstance(self.augmentation, dict):
            self.augmentation = AugmentationConfig(**self.augmentation)
        if self.max_steps_per_epoch is not None and self.max_steps_per_epoch < 1:
            raise DataValidationError(f"max_steps_per_epoch must be positive, got {self.max_steps_per_epoch}")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["adam_betas"] = list(self.adam_betas)
        data["augmentation"] = self.augmentation.to_dict()
        return data
