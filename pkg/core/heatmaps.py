"""
Gaussian heatmap rendering for landmark sets.
"""
import numpy as np

from .exceptions import DataValidationError
from .schema import HeatmapTensor, LandmarkSet


def render_heatmap(landmarks: LandmarkSet, width: int, height: int, sigma: float) -> HeatmapTensor:
    """
    Render one peak-normalized Gaussian per landmark and combine by per-pixel maximum.

    Pixel (x, y) has its centre at integer coordinates, so a landmark on a
    pixel centre yields exactly 1.0 there.
    """
    if not sigma > 0:
        raise DataValidationError(f"Heatmap sigma must be positive, got {sigma}")

    values = np.zeros((height, width), dtype=np.float64)
    if len(landmarks) == 0:
        return HeatmapTensor(values=values, sigma=float(sigma))

    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    denom = 2.0 * sigma * sigma
    for x0, y0 in landmarks.points:
        # separable: exp(-(dx^2 + dy^2) / 2s^2) = exp(-dx^2/2s^2) * exp(-dy^2/2s^2)
        gx = np.exp(-((xs - x0) ** 2) / denom)
        gy = np.exp(-((ys - y0) ** 2) / denom)
        np.maximum(values, np.outer(gy, gx), out=values)

    return HeatmapTensor(values=values, sigma=float(sigma))
