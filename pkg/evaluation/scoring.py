"""
Scoring detectors and annotation sets against ground-truth landmarks.
"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence

from core.annotations import load_annotations
from core.exceptions import DataValidationError, MissingArtifactError
from core.imaging import load_image
from core.schema import ImageSample, LandmarkSet
from detector.inference import predict_heatmaps
from detector.network import DetectorModel

from . import config
from .matching import match_points
from .overlays import write_overlay
from .points import extract_all
from .reports import ImageEvaluation

logger = logging.getLogger(__name__)


def ground_truth(sample: ImageSample) -> LandmarkSet:
    if not sample.annotation_path:
        raise MissingArtifactError(f"{sample.path} has no landmark annotation")
    return load_annotations(sample.annotation_path, sample.size)


def evaluate_predictions(
    samples: Sequence[ImageSample],
    predictions: Sequence[LandmarkSet],
    truths: Optional[Sequence[LandmarkSet]] = None,
    radius: float = config.MATCH_RADIUS,
    fold: Optional[int] = None,
) -> List[ImageEvaluation]:
    """
    Match predictions image by image. `fold` overrides the samples' own
    fold ids (used when one fold's model scores a shared set).
    """
    if len(predictions) != len(samples):
        raise DataValidationError(f"{len(predictions)} predictions for {len(samples)} images")
    truths = [ground_truth(s) for s in samples] if truths is None else list(truths)
    if len(truths) != len(samples):
        raise DataValidationError(f"{len(truths)} annotations for {len(samples)} images")
    evaluations = []
    for sample, pred, gt in zip(samples, predictions, truths):
        evaluations.append(ImageEvaluation(
            image=str(sample.path),
            source_id=sample.source_id,
            fold=sample.fold_id if fold is None else int(fold),
            match=match_points(pred, gt, radius),
            n_pred=len(pred),
            n_gt=len(gt),
        ))
    return evaluations


def evaluate_detector(
    model: DetectorModel,
    samples: Sequence[ImageSample],
    fold: Optional[int] = None,
    threshold: float = config.HEATMAP_THRESHOLD,
    radius: float = config.MATCH_RADIUS,
    batch_size: int = 8,
    device="cpu",
    overlay_dir=None,
) -> List[ImageEvaluation]:
    """Predict, extract points and match them; optionally export overlays."""
    if not samples:
        raise DataValidationError("No images to evaluate")
    heatmaps = predict_heatmaps(model, samples, batch_size=batch_size, device=device)
    predictions = extract_all(heatmaps, threshold)
    truths = [ground_truth(s) for s in samples]
    evaluations = evaluate_predictions(samples, predictions, truths, radius, fold)
    if overlay_dir is not None:
        overlay_dir = Path(overlay_dir)
        for index, (sample, pred, gt, evaluation) in enumerate(zip(samples, predictions, truths, evaluations)):
            stem = f"{index:05d}_{Path(sample.path).stem}"
            write_overlay(load_image(sample).pixels, pred, gt, evaluation.match, overlay_dir / f"{stem}.png")
    logger.info(f"[EVALUATE] fold {fold}: {len(evaluations)} images scored")
    return evaluations


def evaluate_annotation_files(
    samples: Sequence[ImageSample],
    predicted_paths: Sequence,
    radius: float = config.MATCH_RADIUS,
    fold: Optional[int] = None,
) -> List[ImageEvaluation]:
    """Score landmark annotation files (one per sample) against the samples' own annotations."""
    if len(predicted_paths) != len(samples):
        raise DataValidationError(f"{len(predicted_paths)} prediction files for {len(samples)} images")
    predictions = [load_annotations(path, s.size) for path, s in zip(predicted_paths, samples)]
    return evaluate_predictions(samples, predictions, radius=radius, fold=fold)
