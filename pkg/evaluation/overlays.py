"""
Annotated overlays: true positives green, false positives red, false negatives orange.
"""
from pathlib import Path

import cv2
import numpy as np

from core.imaging import to_uint8, write_pixels
from core.schema import LandmarkSet

from . import config
from .matching import MatchResult


def _circle(canvas: np.ndarray, point, color):
    center = (int(round(float(point[0]))), int(round(float(point[1]))))
    cv2.circle(canvas, center, config.OVERLAY_MARKER_RADIUS, color, config.OVERLAY_THICKNESS, lineType=cv2.LINE_8)


def draw_overlay(pixels: np.ndarray, pred: LandmarkSet, gt: LandmarkSet, match: MatchResult) -> np.ndarray:
    """Return a copy of H x W x 3 `pixels` in [0, 1] with the matching drawn on it."""
    canvas = np.ascontiguousarray(to_uint8(pixels))
    for index in match.unmatched_ground_truth:
        _circle(canvas, gt.points[index], config.OVERLAY_FN_COLOR)
    for index in match.unmatched_predictions:
        _circle(canvas, pred.points[index], config.OVERLAY_FP_COLOR)
    for pair in match.pairs:
        _circle(canvas, pred.points[pair.pred_index], config.OVERLAY_TP_COLOR)
    return canvas.astype(np.float32) / 255.0


def write_overlay(pixels: np.ndarray, pred: LandmarkSet, gt: LandmarkSet, match: MatchResult, path) -> Path:
    return write_pixels(draw_overlay(pixels, pred, gt, match), path)
