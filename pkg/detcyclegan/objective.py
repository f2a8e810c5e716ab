"""
CycleGAN objective extended with frozen-detector terms.
"""
from typing import Optional

import torch

from core.exceptions import ConfigurationError
from detector import config as detector_config
from translation.losses import GanLossWeights
from translation.networks import GanModels
from translation.objective import CycleGanOutputs, ReplayPools, cyclegan_objective

from .losses import (
    DetLossWeights,
    FrozenDetectors,
    cross_domain_consistency_loss,
    detection_consistency_loss,
    recovered_detection_loss,
    semantic_loss,
)


def detcyclegan_objective(
    batch_sim: torch.Tensor,
    batch_or: torch.Tensor,
    target_sim: torch.Tensor,
    target_or: torch.Tensor,
    gan_models: GanModels,
    detectors: Optional[FrozenDetectors],
    gan_weights: GanLossWeights,
    det_weights: DetLossWeights,
    pools: Optional[ReplayPools] = None,
    include_discriminators: bool = True,
    smoothing: float = detector_config.DICE_SMOOTHING,
    reduction: str = detector_config.MSE_REDUCTION,
) -> CycleGanOutputs:
    """
    generator_loss = CycleGAN loss + alpha_fake * consistency + alpha_recovered * recovered
    (+ optional cross-domain and semantic terms).

    Terms with zero weight are never evaluated, so the baseline setting is
    the plain CycleGAN objective. Detection terms land in `extra_terms`.
    """
    outputs = cyclegan_objective(batch_sim, batch_or, gan_models, gan_weights, pools, include_discriminators)
    if not det_weights.uses_detectors:
        return outputs
    if detectors is None:
        raise ConfigurationError(f"Variant {det_weights.variant.value} needs frozen detectors")

    loss = outputs.generator_loss
    if det_weights.alpha_fake > 0:
        term = detection_consistency_loss(
            detectors, outputs.fake_or, outputs.fake_sim, target_sim, target_or, smoothing, reduction
        )
        outputs.extra_terms["det_fake"] = term
        loss = loss + det_weights.alpha_fake * term
    if det_weights.alpha_recovered > 0:
        term = recovered_detection_loss(
            detectors, outputs.rec_sim, outputs.rec_or, target_sim, target_or, smoothing, reduction
        )
        outputs.extra_terms["det_recovered"] = term
        loss = loss + det_weights.alpha_recovered * term
    if det_weights.cross_domain_weight > 0:
        term = cross_domain_consistency_loss(
            detectors, outputs.fake_or, outputs.rec_sim, outputs.fake_sim, outputs.rec_or
        )
        outputs.extra_terms["det_cross_domain"] = term
        loss = loss + det_weights.cross_domain_weight * term
    if det_weights.semantic_weight > 0:
        term = semantic_loss(
            detectors, batch_or, outputs.fake_sim, batch_sim, outputs.fake_or, smoothing, reduction
        )
        outputs.extra_terms["det_semantic"] = term
        loss = loss + det_weights.semantic_weight * term
    outputs.generator_loss = loss
    return outputs
