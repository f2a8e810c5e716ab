"""
Landmark extraction from predicted heatmaps.
"""
import logging
from typing import List, Sequence, Union

import numpy as np
from scipy import ndimage

from core.exceptions import DataValidationError
from core.schema import HeatmapTensor, LandmarkSet

from . import config

logger = logging.getLogger(__name__)

# 3x3 block of ones: diagonal neighbours belong to the same component
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def extract_points(
    heatmap: Union[HeatmapTensor, np.ndarray],
    threshold: float = config.HEATMAP_THRESHOLD,
) -> LandmarkSet:
    """
    One landmark per 8-connected component of the thresholded map.

    Each point is the intensity-weighted center of mass of the original map
    values over its component, returned as (x, y) = (column, row).
    """
    if not 0.0 < threshold < 1.0:
        raise DataValidationError(f"threshold must lie in (0, 1), got {threshold}")
    values = heatmap.values if isinstance(heatmap, HeatmapTensor) else np.asarray(heatmap, dtype=np.float64)
    if values.ndim != 2:
        raise DataValidationError(f"Heatmap must be H x W, got shape {values.shape}")

    labels, n_components = ndimage.label(values >= threshold, structure=EIGHT_CONNECTED)
    if n_components == 0:
        return LandmarkSet()
    centers = ndimage.center_of_mass(values, labels, index=np.arange(1, n_components + 1))
    points = np.asarray([(col, row) for row, col in centers], dtype=np.float64)
    return LandmarkSet(points=points)


def extract_all(heatmaps: Sequence[HeatmapTensor], threshold: float = config.HEATMAP_THRESHOLD) -> List[LandmarkSet]:
    landmarks = [extract_points(h, threshold) for h in heatmaps]
    logger.debug(f"Extracted {sum(len(s) for s in landmarks)} points from {len(landmarks)} heatmaps")
    return landmarks
