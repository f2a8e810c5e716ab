"""
Alternating generator / discriminator training, with or without detection consistency.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import torch
from django.conf import settings
from loguru import logger
from torch.utils.data import DataLoader

from core.datasets import LandmarkDataset, UnpairedDataset
from core.exceptions import ConfigurationError, ContractViolationError
from core.folds import FoldSplit
from core.normalization import NormalizationTarget
from core.schema import ImageSample
from core.utils import derive_seed, parameter_checksum, seed_everything, torch_generator
from detcyclegan.losses import DetLossWeights, FrozenDetectors
from detcyclegan.objective import detcyclegan_objective
from translation.losses import GanLossWeights
from translation.networks import GanConfig, GanModels, build_gan_models, set_requires_grad
from translation.objective import ReplayPools, discriminator_losses

from .. import config
from ..schema import GanTrainingConfig
from . import runs
from .checkpoints import load_checkpoint, load_detector, save_checkpoint
from .history import MetricHistory


@dataclass
class GanTrainingResult:
    fold: Optional[int]
    models: GanModels
    last_path: Path
    history_path: Path
    epochs_completed: int


class CycleGanTrainer:
    """
    Three Adam optimizers: one over both generators, one per discriminator.
    A step updates the generators with the discriminators fixed, then each
    discriminator on (replayed) fakes.
    """

    def __init__(
        self,
        gan_cfg: GanConfig,
        gan_weights: GanLossWeights,
        det_weights: DetLossWeights,
        train_cfg: GanTrainingConfig,
        detectors: Optional[FrozenDetectors] = None,
        init_seed: int = 0,
    ):
        self.gan_cfg = gan_cfg
        self.gan_weights = gan_weights
        self.det_weights = det_weights
        self.train_cfg = train_cfg
        self.device = train_cfg.device
        self.detectors = detectors
        self.models = build_gan_models(gan_cfg, init_seed).to(self.device)

        adam = dict(lr=train_cfg.learning_rate, betas=train_cfg.adam_betas, eps=train_cfg.adam_eps)
        self.optimizers = {
            "generators": torch.optim.Adam(self.models.generators(), **adam),
            "d_sim": torch.optim.Adam(self.models.d_sim.parameters(), **adam),
            "d_or": torch.optim.Adam(self.models.d_or.parameters(), **adam),
        }
        self.pools = ReplayPools.create(
            seed=derive_seed(init_seed, "replay"),
            capacity=train_cfg.buffer_capacity,
            swap_probability=train_cfg.buffer_swap_probability,
        )
        self.detector_checksums = self._detector_checksums()

    def _detector_checksums(self) -> Dict[str, str]:
        if self.detectors is None:
            return {}
        return {
            "det_sim": parameter_checksum(self.detectors.det_sim),
            "det_or": parameter_checksum(self.detectors.det_or),
        }

    def check_detectors(self):
        """Raise ContractViolationError if a frozen detector changed."""
        current = self._detector_checksums()
        drifted = sorted(name for name in current if current[name] != self.detector_checksums[name])
        if drifted:
            raise ContractViolationError("Frozen detector parameters changed during GAN training", errors={"detectors": drifted})

    def train_step(self, batch: dict) -> Dict[str, float]:
        sim = batch["sim"].to(self.device)
        real = batch["or"].to(self.device)
        target_sim = batch["sim_heatmap"].to(self.device)
        target_or = batch["or_heatmap"].to(self.device)
        discriminators = [self.models.d_sim, self.models.d_or]

        set_requires_grad(discriminators, False)
        outputs = detcyclegan_objective(
            sim, real, target_sim, target_or, self.models, self.detectors,
            self.gan_weights, self.det_weights, include_discriminators=False,
        )
        self.optimizers["generators"].zero_grad()
        outputs.generator_loss.backward()
        self.optimizers["generators"].step()

        set_requires_grad(discriminators, True)
        loss_d_sim, loss_d_or = discriminator_losses(
            self.models, sim, real, outputs.fake_sim, outputs.fake_or, self.gan_weights, self.pools
        )
        self.optimizers["d_sim"].zero_grad()
        self.optimizers["d_or"].zero_grad()
        (loss_d_sim + loss_d_or).backward()
        self.optimizers["d_sim"].step()
        self.optimizers["d_or"].step()

        items = outputs.loss_items()
        items["d_sim"] = float(loss_d_sim.detach())
        items["d_or"] = float(loss_d_or.detach())
        return items

    def state(self) -> dict:
        return dict(
            models={name: module.state_dict() for name, module in self.models.modules().items()},
            optimizers={name: optimizer.state_dict() for name, optimizer in self.optimizers.items()},
            pools=self.pools.state_dict(),
        )

    def load_state(self, container: dict):
        for name, module in self.models.modules().items():
            module.load_state_dict(container["models"][name])
        for name, optimizer in self.optimizers.items():
            optimizer.load_state_dict(container["optimizers"][name])
        self.pools.load_state_dict(container["extra"]["pools"])


def load_frozen_detectors(detector_paths: Optional[dict], det_weights: DetLossWeights, device="cpu") -> Optional[FrozenDetectors]:
    """
    Frozen detectors for variants that need them.

    Raises:
        ConfigurationError: a detector checkpoint is missing for a detector-weighted run
    """
    if not det_weights.uses_detectors:
        return None
    paths = detector_paths or {}
    missing = [domain for domain in ("sim", "or") if not paths.get(domain) or not Path(paths[domain]).exists()]
    if missing:
        raise ConfigurationError(
            f"Variant {det_weights.variant.value} needs pre-trained detector checkpoints",
            errors={"missing_domains": missing, "paths": {k: str(v) for k, v in paths.items()}},
        )
    return FrozenDetectors(
        det_sim=load_detector(paths["sim"], device=device, freeze=True),
        det_or=load_detector(paths["or"], device=device, freeze=True),
    )


def fit_gan(
    sim_samples: Sequence[ImageSample],
    or_samples: Sequence[ImageSample],
    gan_cfg: GanConfig,
    gan_weights: GanLossWeights,
    det_weights: DetLossWeights,
    train_cfg: GanTrainingConfig,
    out_dir,
    detector_paths: Optional[dict] = None,
    fold: Optional[int] = None,
    experiment_id: str = "",
    resume: bool = False,
    descriptor: Optional[dict] = None,
) -> GanTrainingResult:
    """
    Train one generator pair on unpaired sim / or images; last.pt is written
    every epoch (plus epoch_XXX.pt when keep_every_epoch is set).
    """
    detectors = load_frozen_detectors(detector_paths, det_weights, train_cfg.device)
    out_dir = Path(out_dir)
    seed = train_cfg.seed
    seed_everything(seed)
    trainer = CycleGanTrainer(
        gan_cfg, gan_weights, det_weights, train_cfg, detectors, init_seed=derive_seed(seed, "gan", fold, "init")
    )
    last_path = out_dir / config.LAST_CHECKPOINT
    history = MetricHistory(out_dir / config.HISTORY_FILE, config.STAGE_GAN, fold, seed)

    start_epoch = 0
    if resume and last_path.exists():
        container = load_checkpoint(last_path, kind=config.STAGE_GAN)
        trainer.load_state(container)
        start_epoch = container["epoch"] + 1
        history.reset(keep_through_epoch=container["epoch"])
        logger.info("[TRAIN_GAN] Resuming fold {} at epoch {}", fold, start_epoch)
    else:
        history.reset()

    stage_config = {
        "gan": gan_cfg.to_dict(),
        "gan_weights": gan_weights.to_dict(),
        "det_weights": det_weights.to_dict(),
        "training": train_cfg.to_dict(),
    }
    run = runs.start_run(
        experiment_id, config.STAGE_GAN, fold, seed, stage_config,
        checkpoint_dir=str(out_dir), history_path=str(history.path),
    )
    data_seed = derive_seed(seed, "gan", fold, "data")
    dataset = UnpairedDataset(
        LandmarkDataset(sim_samples, train_cfg.heatmap_sigma, train_cfg.augmentation,
                        seed=derive_seed(data_seed, "sim"), target=NormalizationTarget.GAN),
        LandmarkDataset(or_samples, train_cfg.heatmap_sigma, train_cfg.augmentation,
                        seed=derive_seed(data_seed, "or"), target=NormalizationTarget.GAN),
        seed=data_seed,
    )
    logger.info(
        "[TRAIN_GAN] fold {}: {} sim / {} or images, variant {}, {} epochs",
        fold, len(sim_samples), len(or_samples), det_weights.variant.value, train_cfg.epochs,
    )

    try:
        for epoch in range(start_epoch, train_cfg.epochs):
            torch.manual_seed(derive_seed(seed, "gan", fold, "epoch", epoch))
            dataset.set_epoch(epoch)
            trainer.models.train()
            loader = DataLoader(
                dataset,
                batch_size=train_cfg.batch_size,
                shuffle=True,
                generator=torch_generator(derive_seed(seed, "gan", fold, "shuffle", epoch)),
                num_workers=getattr(settings, "DATA_LOADER_WORKERS", 0),
            )
            totals: Dict[str, float] = {}
            steps = 0
            for batch in loader:
                for name, value in trainer.train_step(batch).items():
                    totals[name] = totals.get(name, 0.0) + value
                steps += 1
                if train_cfg.max_steps_per_epoch and steps >= train_cfg.max_steps_per_epoch:
                    break
            trainer.check_detectors()
            losses = {name: value / max(steps, 1) for name, value in totals.items()}

            container = dict(
                kind=config.STAGE_GAN,
                model_config=gan_cfg.to_dict(),
                epoch=epoch,
                seed=seed,
                **{k: v for k, v in trainer.state().items() if k != "pools"},
                extra={**stage_config, "pools": trainer.pools.state_dict(), "fold": fold,
                       "detector_checksums": trainer.detector_checksums, "descriptor": descriptor or {}},
            )
            save_checkpoint(last_path, **container)
            if train_cfg.keep_every_epoch:
                save_checkpoint(out_dir / config.EPOCH_CHECKPOINT.format(epoch=epoch), **container)

            history.append(epoch, losses, train_cfg.learning_rate)
            runs.update_run(run, epochs_completed=epoch + 1)
            logger.info(
                "[TRAIN_GAN] fold {} epoch {}/{}: G {:.4f} D_sim {:.4f} D_or {:.4f}",
                fold, epoch + 1, train_cfg.epochs,
                losses.get("g_total", float("nan")), losses.get("d_sim", float("nan")), losses.get("d_or", float("nan")),
            )
    except Exception as e:
        runs.finish_run(run, e)
        raise
    runs.finish_run(run)

    if not last_path.exists():
        save_checkpoint(
            last_path, config.STAGE_GAN,
            {name: module.state_dict() for name, module in trainer.models.modules().items()},
            gan_cfg.to_dict(), epoch=-1, seed=seed, extra={**stage_config, "fold": fold},
        )
    return GanTrainingResult(
        fold=fold,
        models=trainer.models,
        last_path=last_path,
        history_path=history.path,
        epochs_completed=max(train_cfg.epochs, start_epoch),
    )


def train_gan(
    sim_samples: Sequence[ImageSample],
    or_samples: Sequence[ImageSample],
    sim_split: FoldSplit,
    or_split: FoldSplit,
    gan_cfg: GanConfig,
    gan_weights: GanLossWeights,
    det_weights: DetLossWeights,
    train_cfg: GanTrainingConfig,
    out_dir,
    detector_paths: Optional[Dict[int, dict]] = None,
    folds: Optional[Sequence[int]] = None,
    experiment_id: str = "",
    resume: bool = False,
    descriptor: Optional[dict] = None,
) -> List[GanTrainingResult]:
    """
    Per-fold GAN training on the matching training folds of both domains.

    Args:
        detector_paths: fold -> {"sim": path, "or": path} of frozen detector checkpoints
    """
    if sim_split.k != or_split.k:
        raise ConfigurationError(f"Domains use different fold counts: sim {sim_split.k}, or {or_split.k}")
    sim_split.check_hygiene(sim_samples)
    or_split.check_hygiene(or_samples)
    results = []
    for fold in (range(sim_split.k) if folds is None else folds):
        results.append(fit_gan(
            [sim_samples[i] for i in sim_split.train(fold)],
            [or_samples[i] for i in or_split.train(fold)],
            gan_cfg, gan_weights, det_weights, train_cfg,
            Path(out_dir) / f"fold_{fold}",
            detector_paths=(detector_paths or {}).get(fold),
            fold=fold, experiment_id=experiment_id, resume=resume, descriptor=descriptor,
        ))
    return results
