"""
Detector retraining on real plus translated images.
"""
from pathlib import Path
from typing import List, Optional, Sequence

from loguru import logger

from core.exceptions import LeakageError
from core.schema import ImageSample
from detector.network import DetectorConfig

from .. import config
from ..schema import DetectorTrainingConfig
from .detector_training import DetectorTrainingResult, fit_detector


def _resolved(path) -> str:
    return str(Path(path).resolve())


def check_test_isolation(training: Sequence[ImageSample], test: Sequence[ImageSample]):
    """
    Raise LeakageError if a training image or recording group also appears
    in the held-out test set.
    """
    test_paths = {_resolved(s.path) for s in test}
    test_groups = {s.source_id for s in test}
    shared_paths = sorted(_resolved(s.path) for s in training if _resolved(s.path) in test_paths)
    shared_groups = sorted({s.source_id for s in training} & test_groups)
    if shared_paths or shared_groups:
        raise LeakageError(
            "Fused training set overlaps the held-out test set",
            errors={"paths": shared_paths[:10], "source_ids": shared_groups},
        )


def fuse_retrain(
    real: Sequence[ImageSample],
    fake: Sequence[ImageSample],
    test: Sequence[ImageSample],
    detector_cfg: DetectorConfig,
    train_cfg: DetectorTrainingConfig,
    out_dir,
    val: Optional[Sequence[ImageSample]] = None,
    fold: Optional[int] = None,
    experiment_id: str = "",
) -> DetectorTrainingResult:
    """
    Train a detector from scratch on real + fake images with the standard
    detector hyperparameters. The test set only takes part in the leakage
    guard here; it is scored by the evaluation stage.

    Raises:
        LeakageError: fused or validation images share files or groups with the test set
    """
    fused: List[ImageSample] = list(real) + list(fake)
    check_test_isolation(fused, test)
    if val:
        check_test_isolation(val, test)
    logger.info(
        "[FUSION] fold {}: {} real + {} fake = {} training images, {} held out",
        fold, len(real), len(fake), len(fused), len(test),
    )
    return fit_detector(
        fused, list(val or []), detector_cfg, train_cfg, out_dir,
        stage=config.STAGE_FUSION, fold=fold, experiment_id=experiment_id, domain="or",
    )
