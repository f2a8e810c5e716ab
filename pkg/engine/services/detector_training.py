"""
Detector training per cross-validation fold.
"""
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import torch
from django.conf import settings
from loguru import logger
from torch.utils.data import DataLoader

from core.datasets import LandmarkDataset
from core.exceptions import ConfigurationError
from core.folds import FoldSplit
from core.schema import ImageSample
from core.utils import derive_seed, seed_everything, torch_generator
from detector.losses import detection_loss
from detector.network import DetectorConfig, DetectorModel, build_detector, detector_forward

from .. import config
from ..schema import DetectorTrainingConfig
from . import runs
from .checkpoints import load_checkpoint, load_detector, save_checkpoint
from .history import MetricHistory


@dataclass
class DetectorTrainingResult:
    fold: Optional[int]
    model: DetectorModel
    best_path: Path
    last_path: Path
    history_path: Path
    best_val_loss: float
    epochs_completed: int
    n_train: int = 0


def build_optimizer(model: torch.nn.Module, train_cfg) -> torch.optim.Adam:
    return torch.optim.Adam(
        model.parameters(),
        lr=train_cfg.learning_rate,
        betas=train_cfg.adam_betas,
        eps=train_cfg.adam_eps,
    )


def build_scheduler(optimizer, train_cfg: DetectorTrainingConfig):
    """Multiply the learning rate by `plateau_factor` after `plateau_patience` stagnant epochs."""
    return torch.optim.lr_scheduler.ReduceLROnPlateau(
        optimizer, mode="min", factor=train_cfg.plateau_factor, patience=train_cfg.plateau_patience
    )


def _loader(dataset, batch_size: int, shuffle: bool, seed: int) -> DataLoader:
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        generator=torch_generator(seed),
        num_workers=getattr(settings, "DATA_LOADER_WORKERS", 0),
    )


def _batch_loss(model: DetectorModel, batch: dict, device) -> torch.Tensor:
    images = batch["image"].to(device)
    targets = batch["heatmap"].to(device)
    sigmoid_map, refined_map = detector_forward(model, images)
    return detection_loss(sigmoid_map, refined_map, targets, model.config.smoothing, model.config.mse_reduction)


@torch.no_grad()
def validation_loss(model: DetectorModel, samples: Sequence[ImageSample], batch_size: int, device="cpu") -> float:
    """Mean per-batch detection loss in eval mode, without augmentation."""
    if not samples:
        return float("nan")
    model.eval()
    dataset = LandmarkDataset(samples, model.config.heatmap_sigma)
    losses = [float(_batch_loss(model, batch, device)) for batch in _loader(dataset, batch_size, False, 0)]
    return sum(losses) / len(losses)


def fit_detector(
    train_samples: Sequence[ImageSample],
    val_samples: Sequence[ImageSample],
    detector_cfg: DetectorConfig,
    train_cfg: DetectorTrainingConfig,
    out_dir,
    stage: str = config.STAGE_DETECTOR,
    fold: Optional[int] = None,
    experiment_id: str = "",
    domain: str = "",
    resume: bool = False,
) -> DetectorTrainingResult:
    """
    Train a freshly initialized detector; keeps last.pt every epoch and
    best.pt by validation loss (training loss when there is no validation set).

    Raises:
        ConfigurationError: empty training set
    """
    if not train_samples:
        raise ConfigurationError(f"[{stage.upper()}] fold {fold} has no training images")

    out_dir = Path(out_dir)
    device = train_cfg.device
    seed = train_cfg.seed
    seed_everything(seed)
    model = build_detector(detector_cfg, derive_seed(seed, stage, domain, fold, "init")).to(device)
    optimizer = build_optimizer(model, train_cfg)
    scheduler = build_scheduler(optimizer, train_cfg)
    best_path, last_path = out_dir / config.BEST_CHECKPOINT, out_dir / config.LAST_CHECKPOINT
    history = MetricHistory(out_dir / config.HISTORY_FILE, stage, fold, seed)

    start_epoch, best_val = 0, math.inf
    if resume and last_path.exists():
        container = load_checkpoint(last_path, kind=config.STAGE_DETECTOR)
        model.load_state_dict(container["models"]["detector"])
        optimizer.load_state_dict(container["optimizers"]["adam"])
        scheduler.load_state_dict(container["schedulers"]["plateau"])
        start_epoch = container["epoch"] + 1
        best_val = container["extra"]["best_val_loss"]
        history.reset(keep_through_epoch=container["epoch"])
        logger.info("[{}] Resuming fold {} at epoch {}", stage.upper(), fold, start_epoch)
    else:
        history.reset()

    run = runs.start_run(
        experiment_id, stage, fold, seed,
        {"detector": detector_cfg.to_dict(), "training": train_cfg.to_dict()},
        domain=domain, checkpoint_dir=str(out_dir), history_path=str(history.path),
    )
    dataset = LandmarkDataset(
        train_samples, detector_cfg.heatmap_sigma, train_cfg.augmentation,
        seed=derive_seed(seed, stage, domain, fold, "augment"),
    )
    logger.info(
        "[{}] Training detector fold {} on {} images ({} validation) for {} epochs",
        stage.upper(), fold, len(train_samples), len(val_samples), train_cfg.epochs,
    )

    try:
        for epoch in range(start_epoch, train_cfg.epochs):
            torch.manual_seed(derive_seed(seed, stage, domain, fold, "epoch", epoch))
            dataset.set_epoch(epoch)
            model.train()
            losses = []
            loader = _loader(dataset, train_cfg.batch_size, True, derive_seed(seed, stage, domain, fold, "shuffle", epoch))
            for batch in loader:
                optimizer.zero_grad()
                loss = _batch_loss(model, batch, device)
                loss.backward()
                optimizer.step()
                losses.append(float(loss.detach()))
            train_loss = sum(losses) / len(losses)

            val_loss = validation_loss(model, val_samples, train_cfg.batch_size, device)
            monitored = train_loss if math.isnan(val_loss) else val_loss
            scheduler.step(monitored)
            lr = optimizer.param_groups[0]["lr"]

            improved = monitored < best_val
            if improved:
                best_val = monitored
            state = dict(
                kind=config.STAGE_DETECTOR,
                models={"detector": model.state_dict()},
                model_config=detector_cfg.to_dict(),
                epoch=epoch,
                seed=seed,
                optimizers={"adam": optimizer.state_dict()},
                schedulers={"plateau": scheduler.state_dict()},
                extra={"best_val_loss": best_val, "training": train_cfg.to_dict(), "fold": fold, "domain": domain},
            )
            save_checkpoint(last_path, **state)
            if improved:
                save_checkpoint(best_path, **state)

            record_losses = {"train": train_loss}
            if not math.isnan(val_loss):
                record_losses["val"] = val_loss
            history.append(epoch, record_losses, lr)
            runs.update_run(run, epochs_completed=epoch + 1, best_val_loss=best_val)
            logger.info(
                "[{}] fold {} epoch {}/{}: train {:.5f} val {:.5f} lr {:.2e}",
                stage.upper(), fold, epoch + 1, train_cfg.epochs, train_loss, val_loss, lr,
            )
    except Exception as e:
        runs.finish_run(run, e)
        raise
    runs.finish_run(run)

    if not best_path.exists():
        # zero epochs requested
        save_checkpoint(
            best_path, config.STAGE_DETECTOR, {"detector": model.state_dict()}, detector_cfg.to_dict(),
            epoch=-1, seed=seed, extra={"best_val_loss": best_val, "fold": fold, "domain": domain},
        )
    best_model = load_detector(best_path, device=device, freeze=False)
    return DetectorTrainingResult(
        fold=fold,
        model=best_model,
        best_path=best_path,
        last_path=last_path,
        history_path=history.path,
        best_val_loss=best_val,
        epochs_completed=max(train_cfg.epochs, start_epoch),
        n_train=len(train_samples),
    )


def train_detector(
    samples: Sequence[ImageSample],
    split: FoldSplit,
    detector_cfg: DetectorConfig,
    train_cfg: DetectorTrainingConfig,
    out_dir,
    folds: Optional[Sequence[int]] = None,
    experiment_id: str = "",
    domain: str = "",
    resume: bool = False,
) -> List[DetectorTrainingResult]:
    """
    One detector per fold, trained on that fold's training split and
    checkpointed by its validation loss under out_dir/fold_<i>/.

    Raises:
        LeakageError: the split mixes recording groups across train and validation
        ConfigurationError: a fold without training images
    """
    split.check_hygiene(samples)
    results = []
    for fold in (range(split.k) if folds is None else folds):
        train_samples = [samples[i] for i in split.train(fold)]
        val_samples = [samples[i] for i in split.val(fold)]
        results.append(fit_detector(
            train_samples, val_samples, detector_cfg, train_cfg,
            Path(out_dir) / f"fold_{fold}", fold=fold, experiment_id=experiment_id, domain=domain, resume=resume,
        ))
    return results
