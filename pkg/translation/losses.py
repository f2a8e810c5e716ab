"""
Adversarial, cycle-consistency and identity losses.
"""
from dataclasses import dataclass
from enum import Enum

import torch
import torch.nn.functional as F

from core.exceptions import DataValidationError, ShapeError

from . import config


class AdversarialForm(str, Enum):
    LEAST_SQUARES = "least_squares"
    CROSS_ENTROPY = "cross_entropy"


@dataclass
class GanLossWeights:
    lambda_cycle: float = config.LAMBDA_CYCLE
    lambda_identity: float = config.LAMBDA_IDENTITY
    adversarial_form: AdversarialForm = AdversarialForm(config.ADVERSARIAL_FORM)

    def __post_init__(self):
        self.adversarial_form = AdversarialForm(self.adversarial_form)
        if self.lambda_cycle < 0 or self.lambda_identity < 0:
            raise DataValidationError(
                f"GAN loss weights must be non-negative, got cycle={self.lambda_cycle}, "
                f"identity={self.lambda_identity}"
            )

    def to_dict(self) -> dict:
        return {
            "lambda_cycle": self.lambda_cycle,
            "lambda_identity": self.lambda_identity,
            "adversarial_form": self.adversarial_form.value,
        }


def _check_batch(batch: torch.Tensor, name: str):
    if batch.dim() == 0 or batch.shape[0] == 0:
        raise DataValidationError(f"Empty {name} batch")


def _score_against(scores: torch.Tensor, label: float, form: AdversarialForm) -> torch.Tensor:
    if form is AdversarialForm.LEAST_SQUARES:
        return torch.mean((scores - label) ** 2)
    # cross-entropy scores are logits
    return F.binary_cross_entropy_with_logits(scores, torch.full_like(scores, label))


def discriminator_loss(discriminator, real: torch.Tensor, fake: torch.Tensor, form=AdversarialForm.LEAST_SQUARES):
    """Real patches scored towards 1, fake patches towards 0. `fake` is detached."""
    form = AdversarialForm(form)
    _check_batch(real, "real")
    _check_batch(fake, "fake")
    return _score_against(discriminator(real), 1.0, form) + _score_against(discriminator(fake.detach()), 0.0, form)


def generator_adversarial_loss(discriminator, fake: torch.Tensor, form=AdversarialForm.LEAST_SQUARES):
    """Fresh generator output scored towards 1."""
    form = AdversarialForm(form)
    _check_batch(fake, "fake")
    return _score_against(discriminator(fake), 1.0, form)


def adversarial_loss(discriminator, real: torch.Tensor, fake: torch.Tensor, form=AdversarialForm.LEAST_SQUARES):
    """
    Both sides of the adversarial game for one discriminator.

    Returns:
        (loss_D, loss_G); loss_D does not propagate into the generator
    """
    return (
        discriminator_loss(discriminator, real, fake, form),
        generator_adversarial_loss(discriminator, fake, form),
    )


def cycle_loss(original: torch.Tensor, recovered: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference between an image and its reconstruction."""
    if original.shape != recovered.shape:
        raise ShapeError(f"Cycle loss shapes differ: {tuple(original.shape)} vs {tuple(recovered.shape)}")
    return F.l1_loss(recovered, original)


def identity_loss(g_sim2or, g_or2sim, x_or: torch.Tensor, x_sim: torch.Tensor) -> torch.Tensor:
    """Each generator applied to its own target domain should change nothing."""
    same_or = g_sim2or(x_or)
    same_sim = g_or2sim(x_sim)
    if same_or.shape != x_or.shape or same_sim.shape != x_sim.shape:
        raise ShapeError(
            f"Identity outputs {tuple(same_or.shape)}, {tuple(same_sim.shape)} do not match inputs "
            f"{tuple(x_or.shape)}, {tuple(x_sim.shape)}"
        )
    return F.l1_loss(same_or, x_or) + F.l1_loss(same_sim, x_sim)
