"""
Detection-consistency losses.

Frozen detectors score generator output. Gradients reach the generators
only; detector parameters never change.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import torch
import torch.nn.functional as F

from core.exceptions import ContractViolationError, DataValidationError, ShapeError
from core.normalization import gan_to_unit
from detector import config as detector_config
from detector.losses import detection_loss

from . import config

logger = logging.getLogger(__name__)


class Variant(str, Enum):
    BASELINE = "baseline"
    VAR1 = "var1"
    VAR2 = "var2"


@dataclass
class DetLossWeights:
    alpha_fake: float = 0.0
    alpha_recovered: float = 0.0
    variant: Variant = Variant.BASELINE
    cross_domain_weight: float = config.CROSS_DOMAIN_WEIGHT
    semantic_weight: float = config.SEMANTIC_WEIGHT

    def __post_init__(self):
        self.variant = Variant(self.variant)
        for name in ("alpha_fake", "alpha_recovered", "cross_domain_weight", "semantic_weight"):
            if getattr(self, name) < 0:
                raise DataValidationError(f"{name} must be non-negative, got {getattr(self, name)}")
        expected = self.variant_for(self.alpha_fake, self.alpha_recovered)
        if expected is not self.variant:
            raise DataValidationError(
                f"Weights ({self.alpha_fake}, {self.alpha_recovered}) describe {expected.value}, "
                f"not {self.variant.value}"
            )

    @staticmethod
    def variant_for(alpha_fake: float, alpha_recovered: float) -> Variant:
        if alpha_fake == 0 and alpha_recovered == 0:
            return Variant.BASELINE
        if alpha_recovered == 0:
            return Variant.VAR2
        if alpha_fake == 0:
            raise DataValidationError(
                f"alpha_fake=0 with alpha_recovered={alpha_recovered} is not a supported variant"
            )
        return Variant.VAR1

    @classmethod
    def from_grid(cls, name: str, **ablations) -> "DetLossWeights":
        if name not in config.WEIGHT_GRID:
            raise DataValidationError(f"Unknown weight grid entry {name!r}; choose from {sorted(config.WEIGHT_GRID)}")
        alpha_fake, alpha_recovered = config.WEIGHT_GRID[name]
        return cls(alpha_fake, alpha_recovered, cls.variant_for(alpha_fake, alpha_recovered), **ablations)

    @property
    def uses_detectors(self) -> bool:
        return any(w > 0 for w in (self.alpha_fake, self.alpha_recovered, self.cross_domain_weight, self.semantic_weight))

    def to_dict(self) -> dict:
        return {
            "alpha_fake": self.alpha_fake,
            "alpha_recovered": self.alpha_recovered,
            "variant": self.variant.value,
            "cross_domain_weight": self.cross_domain_weight,
            "semantic_weight": self.semantic_weight,
        }


@dataclass
class FrozenDetectors:
    """One frozen detector per domain."""
    det_sim: torch.nn.Module
    det_or: torch.nn.Module

    def check_frozen(self):
        for name, detector in (("det_sim", self.det_sim), ("det_or", self.det_or)):
            if getattr(detector, "trainable", True) or any(p.requires_grad for p in detector.parameters()):
                raise ContractViolationError(f"{name} must be frozen before it scores generator output")


def _detect(detector, gan_images: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Detector maps for generator-range images."""
    return detector(gan_to_unit(gan_images))


def _det_loss(maps, target, smoothing, reduction) -> torch.Tensor:
    sigmoid_map, refined_map = maps
    return detection_loss(sigmoid_map, refined_map, target, smoothing, reduction)


def detection_consistency_loss(
    detectors: FrozenDetectors,
    fake_or: torch.Tensor,
    fake_sim: torch.Tensor,
    target_sim: torch.Tensor,
    target_or: torch.Tensor,
    smoothing: float = detector_config.DICE_SMOOTHING,
    reduction: str = detector_config.MSE_REDUCTION,
) -> torch.Tensor:
    """
    Translated images must show their source image's landmarks to the
    target-domain detector.

    Args:
        fake_or: G_sim2or(x_sim), carries target_sim
        fake_sim: G_or2sim(x_or), carries target_or
    """
    detectors.check_frozen()
    return (
        _det_loss(_detect(detectors.det_or, fake_or), target_sim, smoothing, reduction)
        + _det_loss(_detect(detectors.det_sim, fake_sim), target_or, smoothing, reduction)
    )


def recovered_detection_loss(
    detectors: FrozenDetectors,
    rec_sim: torch.Tensor,
    rec_or: torch.Tensor,
    target_sim: torch.Tensor,
    target_or: torch.Tensor,
    smoothing: float = detector_config.DICE_SMOOTHING,
    reduction: str = detector_config.MSE_REDUCTION,
) -> torch.Tensor:
    """Twice-translated images scored by the detector of their original domain."""
    detectors.check_frozen()
    return (
        _det_loss(_detect(detectors.det_sim, rec_sim), target_sim, smoothing, reduction)
        + _det_loss(_detect(detectors.det_or, rec_or), target_or, smoothing, reduction)
    )


def cross_domain_consistency_loss(
    detectors: FrozenDetectors,
    fake_or: torch.Tensor,
    rec_sim: torch.Tensor,
    fake_sim: torch.Tensor,
    rec_or: torch.Tensor,
) -> torch.Tensor:
    """MSE between refined maps of a translated image and of its reconstruction."""
    detectors.check_frozen()
    pairs = (
        (_detect(detectors.det_or, fake_or)[1], _detect(detectors.det_sim, rec_sim)[1]),
        (_detect(detectors.det_sim, fake_sim)[1], _detect(detectors.det_or, rec_or)[1]),
    )
    total = 0.0
    for first, second in pairs:
        if first.shape != second.shape:
            raise ShapeError(f"Cross-domain maps differ in shape: {tuple(first.shape)} vs {tuple(second.shape)}")
        total = total + F.mse_loss(first, second)
    return total


def semantic_loss(
    detectors: FrozenDetectors,
    batch_or: torch.Tensor,
    fake_sim: torch.Tensor,
    batch_sim: torch.Tensor,
    fake_or: torch.Tensor,
    smoothing: float = detector_config.DICE_SMOOTHING,
    reduction: str = detector_config.MSE_REDUCTION,
    detach_labels: bool = True,
) -> torch.Tensor:
    """
    Each detector labels the untranslated image; the translated image must
    reproduce that label. Labels are refined maps, detached by default.
    """
    detectors.check_frozen()
    total = 0.0
    for detector, original, translated in (
        (detectors.det_sim, batch_or, fake_sim),
        (detectors.det_or, batch_sim, fake_or),
    ):
        label = _detect(detector, original)[1]
        if detach_labels:
            label = label.detach()
        total = total + _det_loss(_detect(detector, translated), label, smoothing, reduction)
    return total
