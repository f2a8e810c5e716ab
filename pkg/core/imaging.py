"""
Image file I/O at the working resolution.
"""
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from PIL import Image

from .exceptions import MissingArtifactError
from .schema import ImageSample


def read_pixels(path, size: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """Read an image file as H x W x 3 float32 in [0, 1], resized to `size` = (W, H) if given."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"Image not found: {path}")
    try:
        with Image.open(path) as image:
            image = image.convert("RGB")
            if size is not None and image.size != tuple(size):
                image = image.resize(tuple(size), Image.BILINEAR)
            array = np.asarray(image, dtype=np.float32) / 255.0
    except OSError as e:
        raise MissingArtifactError(f"Could not read image {path}: {str(e)}")
    return array


def load_image(sample: ImageSample) -> ImageSample:
    """Return a copy of `sample` with pixels loaded at its declared resolution."""
    if sample.pixels is not None:
        return sample
    return sample.with_pixels(read_pixels(sample.path, sample.size))


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)


def write_pixels(pixels: np.ndarray, path) -> Path:
    """Write H x W x 3 pixels in [0, 1] as an 8-bit RGB image file."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(to_uint8(pixels), mode="RGB").save(path)
    except OSError as e:
        raise MissingArtifactError(f"Could not write image {path}: {str(e)}")
    return path


def write_mask(mask: np.ndarray, path) -> Path:
    """Write a binary H x W mask as an 8-bit greyscale image (0 / 255)."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255, mode="L").save(path)
    except OSError as e:
        raise MissingArtifactError(f"Could not write mask {path}: {str(e)}")
    return path


def read_mask(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"Mask not found: {path}")
    with Image.open(path) as image:
        return (np.asarray(image.convert("L")) > 127).astype(np.uint8)
