"""
Input normalization for the two network families.

Detectors consume [0, 1] pixels unchanged; the translation networks consume
pixels standardized with mean 0.5 and std 0.5, i.e. [-1, 1].
"""
from enum import Enum

import numpy as np

from .exceptions import DataValidationError
from .schema import ImageSample

GAN_MEAN = 0.5
GAN_STD = 0.5


class NormalizationTarget(str, Enum):
    DETECTOR = "detector"
    GAN = "gan"


def normalize_for(image: ImageSample, target) -> np.ndarray:
    """H x W x 3 array prepared for `target` ("detector" or "gan")."""
    target = NormalizationTarget(target)
    pixels = image.pixels
    if pixels is None:
        raise DataValidationError(f"{image.path}: pixels not loaded")
    if pixels.size and (float(pixels.min()) < 0.0 or float(pixels.max()) > 1.0):
        raise DataValidationError(f"{image.path}: pixel values must lie in [0, 1] before normalization")

    if target is NormalizationTarget.DETECTOR:
        return pixels
    return (pixels - GAN_MEAN) / GAN_STD


def gan_to_unit(values):
    """Map generator outputs in [-1, 1] back to [0, 1]; works on arrays and tensors."""
    return values * GAN_STD + GAN_MEAN
