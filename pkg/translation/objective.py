"""
The cycle-consistent GAN objective over one unpaired batch.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import torch

from .buffer import ReplayBuffer
from .losses import (
    GanLossWeights,
    cycle_loss,
    discriminator_loss,
    generator_adversarial_loss,
    identity_loss,
)
from .networks import GanModels, check_gan_input


@dataclass
class CycleGanOutputs:
    """
    Generator loss plus every translated and recovered batch.

    fake_or = G_sim2or(x_sim), rec_sim = G_or2sim(fake_or),
    fake_sim = G_or2sim(x_or), rec_or = G_sim2or(fake_sim).
    """
    generator_loss: torch.Tensor
    terms: Dict[str, torch.Tensor]
    fake_or: torch.Tensor
    fake_sim: torch.Tensor
    rec_sim: torch.Tensor
    rec_or: torch.Tensor
    discriminator_losses: Optional[Tuple[torch.Tensor, torch.Tensor]] = None
    extra_terms: Dict[str, torch.Tensor] = field(default_factory=dict)

    def loss_items(self) -> Dict[str, float]:
        """Detached scalar values for metric history."""
        items = {f"g_{name}": float(value.detach()) for name, value in self.terms.items()}
        items.update({name: float(value.detach()) for name, value in self.extra_terms.items()})
        items["g_total"] = float(self.generator_loss.detach())
        if self.discriminator_losses is not None:
            items["d_sim"] = float(self.discriminator_losses[0].detach())
            items["d_or"] = float(self.discriminator_losses[1].detach())
        return items


@dataclass
class ReplayPools:
    sim_pool: ReplayBuffer
    or_pool: ReplayBuffer

    @classmethod
    def create(cls, seed: int = 0, **kwargs) -> "ReplayPools":
        return cls(sim_pool=ReplayBuffer(seed=seed, **kwargs), or_pool=ReplayBuffer(seed=seed + 1, **kwargs))

    def state_dict(self) -> dict:
        return {"sim": self.sim_pool.state_dict(), "or": self.or_pool.state_dict()}

    def load_state_dict(self, state: dict):
        self.sim_pool.load_state_dict(state["sim"])
        self.or_pool.load_state_dict(state["or"])


def discriminator_losses(
    models: GanModels,
    batch_sim: torch.Tensor,
    batch_or: torch.Tensor,
    fake_sim: torch.Tensor,
    fake_or: torch.Tensor,
    weights: GanLossWeights,
    pools: Optional[ReplayPools] = None,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """(loss_D_sim, loss_D_or); fakes pass through the replay pools when given."""
    if pools is not None:
        fake_sim = pools.sim_pool.push_and_pop(fake_sim)
        fake_or = pools.or_pool.push_and_pop(fake_or)
    form = weights.adversarial_form
    return (
        discriminator_loss(models.d_sim, batch_sim, fake_sim, form),
        discriminator_loss(models.d_or, batch_or, fake_or, form),
    )


def cyclegan_objective(
    batch_sim: torch.Tensor,
    batch_or: torch.Tensor,
    models: GanModels,
    weights: GanLossWeights,
    pools: Optional[ReplayPools] = None,
    include_discriminators: bool = True,
) -> CycleGanOutputs:
    """
    generator_loss = adversarial + lambda_cycle * cycle + lambda_identity * identity.

    Both batches are in [-1, 1]. The identity term is skipped when its weight
    is zero.
    """
    check_gan_input(models.g_sim2or, batch_sim)
    check_gan_input(models.g_or2sim, batch_or)

    fake_or = models.g_sim2or(batch_sim)
    rec_sim = models.g_or2sim(fake_or)
    fake_sim = models.g_or2sim(batch_or)
    rec_or = models.g_sim2or(fake_sim)

    form = weights.adversarial_form
    adversarial = (
        generator_adversarial_loss(models.d_or, fake_or, form)
        + generator_adversarial_loss(models.d_sim, fake_sim, form)
    )
    cycle = cycle_loss(batch_sim, rec_sim) + cycle_loss(batch_or, rec_or)
    if weights.lambda_identity > 0:
        identity = identity_loss(models.g_sim2or, models.g_or2sim, batch_or, batch_sim)
    else:
        identity = torch.zeros((), dtype=adversarial.dtype, device=adversarial.device)

    generator_loss = adversarial + weights.lambda_cycle * cycle + weights.lambda_identity * identity
    outputs = CycleGanOutputs(
        generator_loss=generator_loss,
        terms={"adversarial": adversarial, "cycle": cycle, "identity": identity},
        fake_or=fake_or,
        fake_sim=fake_sim,
        rec_sim=rec_sim,
        rec_or=rec_or,
    )
    if include_discriminators:
        outputs.discriminator_losses = discriminator_losses(
            models, batch_sim, batch_or, fake_sim, fake_or, weights, pools
        )
    return outputs
