"""
Suture mask rasterization and similarity.
"""
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import cv2
import numpy as np

from core.annotations import load_suture_polylines
from core.exceptions import DataValidationError, ShapeError

from . import config
from .metrics import MetricsReport, aggregate_values

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MaskSimilarity:
    mse: float
    dice: float

    def to_dict(self) -> dict:
        return {"mse": self.mse, "dice": self.dice}


def mask_similarity(mask_a: np.ndarray, mask_b: np.ndarray,
                    smoothing: float = config.MASK_DICE_SMOOTHING) -> MaskSimilarity:
    """
    Mean squared pixel difference and smoothed Dice of two binary masks.

    Dice of two empty masks is 1 when `smoothing` is 0.
    """
    a = (np.asarray(mask_a) > 0).astype(np.float64)
    b = (np.asarray(mask_b) > 0).astype(np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"Mask shapes differ: {a.shape} vs {b.shape}")
    if smoothing < 0:
        raise DataValidationError(f"Dice smoothing must be non-negative, got {smoothing}")
    mse = float(np.mean((a - b) ** 2)) if a.size else 0.0
    denominator = a.sum() + b.sum() + smoothing
    dice = float((2.0 * (a * b).sum() + smoothing) / denominator) if denominator > 0 else 1.0
    return MaskSimilarity(mse=mse, dice=dice)


def rasterize_suture_mask(polylines: Sequence[np.ndarray], width: int, height: int,
                          stroke_width: int = config.MASK_STROKE_WIDTH) -> np.ndarray:
    """Draw suture polylines into an H x W uint8 mask of 0/1."""
    mask = np.zeros((height, width), dtype=np.uint8)
    curves = [np.rint(np.asarray(line, dtype=np.float64)).astype(np.int32).reshape(-1, 1, 2) for line in polylines]
    curves = [c for c in curves if len(c) >= 2]
    if curves:
        cv2.polylines(mask, curves, isClosed=False, color=1, thickness=int(stroke_width), lineType=cv2.LINE_8)
    return mask


def annotation_mask(path, image_size: Tuple[int, int], stroke_width: int = config.MASK_STROKE_WIDTH) -> np.ndarray:
    width, height = image_size
    return rasterize_suture_mask(load_suture_polylines(path, image_size), width, height, stroke_width)


@dataclass
class MaskPairResult:
    candidate: str
    reference: str
    fold: int
    similarity: MaskSimilarity

    def to_dict(self) -> dict:
        return {"candidate": self.candidate, "reference": self.reference, "fold": self.fold, **self.similarity.to_dict()}


def evaluate_mask_pairs(
    candidates: Sequence,
    references: Sequence,
    image_size: Tuple[int, int],
    fold_ids: Optional[Sequence[int]] = None,
    stroke_width: int = config.MASK_STROKE_WIDTH,
    smoothing: float = config.MASK_DICE_SMOOTHING,
) -> Tuple[List[MaskPairResult], MetricsReport]:
    """
    Compare suture annotations pairwise (e.g. sutures labelled on fake images
    vs. the source simulator labels). Per-fold values are image means; the
    report holds their mean and std across folds.
    """
    if len(candidates) != len(references):
        raise DataValidationError(f"{len(candidates)} candidate vs {len(references)} reference annotation files")
    if not candidates:
        raise DataValidationError("No annotation pairs to compare")
    fold_ids = [-1] * len(candidates) if fold_ids is None else list(fold_ids)

    results = []
    for candidate, reference, fold in zip(candidates, references, fold_ids):
        similarity = mask_similarity(
            annotation_mask(candidate, image_size, stroke_width),
            annotation_mask(reference, image_size, stroke_width),
            smoothing,
        )
        results.append(MaskPairResult(str(candidate), str(reference), int(fold), similarity))

    by_fold = defaultdict(list)
    for result in results:
        by_fold[result.fold].append(result.similarity)
    folds = sorted(by_fold)
    report = aggregate_values(
        {
            "mse": [float(np.mean([s.mse for s in by_fold[f]])) for f in folds],
            "dice": [float(np.mean([s.dice for s in by_fold[f]])) for f in folds],
        },
        folds,
    )
    logger.info(f"[MASKS] {len(results)} pairs over {len(folds)} fold(s): dice {report.mean['dice']:.4f}")
    return results, report
