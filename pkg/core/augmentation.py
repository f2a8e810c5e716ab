"""
Joint image/landmark augmentation.

Colour jitter touches pixels only. Geometric transforms (flips and one
affine about the image centre) are applied to the pixels and, with the
same matrix, to the landmark coordinates; points leaving the frame are
dropped. Heatmaps are re-rendered from the transformed coordinates by the
caller.

All random numbers are drawn up front in a fixed order, so a generator in a
given state always produces the same transform whatever gates fire.
"""
from dataclasses import asdict, dataclass, field
from typing import Tuple

import cv2
import numpy as np

from .exceptions import DataValidationError
from .schema import ImageSample, LandmarkSet


def _check_probability(name, value):
    if not 0.0 <= value <= 1.0:
        raise DataValidationError(f"{name} must lie in [0, 1], got {value}")


def _check_range(name, bounds, low=None):
    lo, hi = bounds
    if lo > hi:
        raise DataValidationError(f"{name} range is inverted: {bounds}")
    if low is not None and lo < low:
        raise DataValidationError(f"{name} range must start at or above {low}, got {bounds}")


@dataclass
class ColorJitterConfig:
    brightness: float = 0.2
    contrast: Tuple[float, float] = (0.3, 1.5)
    saturation: Tuple[float, float] = (0.5, 2.0)
    hue: float = 0.1
    probability: float = 0.5

    def __post_init__(self):
        self.contrast = tuple(self.contrast)
        self.saturation = tuple(self.saturation)
        if self.brightness < 0:
            raise DataValidationError(f"brightness must be non-negative, got {self.brightness}")
        if not 0.0 <= self.hue <= 0.5:
            raise DataValidationError(f"hue must lie in [0, 0.5], got {self.hue}")
        _check_range("contrast", self.contrast, low=0.0)
        _check_range("saturation", self.saturation, low=0.0)
        _check_probability("color probability", self.probability)


@dataclass
class GeometricConfig:
    rotation: float = 60.0
    translation: float = 0.1
    shear: float = 0.1
    hflip_probability: float = 0.5
    vflip_probability: float = 0.5
    affine_probability: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.rotation <= 180.0:
            raise DataValidationError(f"rotation must lie in [0, 180] degrees, got {self.rotation}")
        if not 0.0 <= self.translation < 1.0:
            raise DataValidationError(f"translation must lie in [0, 1), got {self.translation}")
        if not 0.0 <= self.shear < 1.0:
            raise DataValidationError(f"shear must lie in [0, 1), got {self.shear}")
        _check_probability("hflip probability", self.hflip_probability)
        _check_probability("vflip probability", self.vflip_probability)
        _check_probability("affine probability", self.affine_probability)


@dataclass
class AugmentationConfig:
    color: ColorJitterConfig = field(default_factory=ColorJitterConfig)
    geometric: GeometricConfig = field(default_factory=GeometricConfig)
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.color, dict):
            self.color = ColorJitterConfig(**self.color)
        if isinstance(self.geometric, dict):
            self.geometric = GeometricConfig(**self.geometric)

    @classmethod
    def disabled(cls, seed: int = 0) -> "AugmentationConfig":
        return cls(
            color=ColorJitterConfig(probability=0.0),
            geometric=GeometricConfig(hflip_probability=0.0, vflip_probability=0.0, affine_probability=0.0),
            seed=seed,
        )

    @classmethod
    def for_translation(cls, seed: int = 0) -> "AugmentationConfig":
        """Rotation and flips only, each with p = 0.5 (GAN training)."""
        return cls(
            color=ColorJitterConfig(probability=0.0),
            geometric=GeometricConfig(translation=0.0, shear=0.0),
            seed=seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AugmentationParams:
    """One concrete draw of every transform parameter."""
    apply_color: bool
    brightness: float
    contrast: float
    saturation: float
    hue: float
    hflip: bool
    vflip: bool
    apply_affine: bool
    angle: float
    translate_x: float
    translate_y: float
    shear: float


def sample_augmentation(cfg: AugmentationConfig, rng: np.random.Generator) -> AugmentationParams:
    color, geo = cfg.color, cfg.geometric
    apply_color = rng.random() < color.probability
    brightness = rng.uniform(-color.brightness, color.brightness)
    contrast = rng.uniform(*color.contrast)
    saturation = rng.uniform(*color.saturation)
    hue = rng.uniform(-color.hue, color.hue)
    hflip = rng.random() < geo.hflip_probability
    vflip = rng.random() < geo.vflip_probability
    apply_affine = rng.random() < geo.affine_probability
    angle = rng.uniform(-geo.rotation, geo.rotation)
    translate_x = rng.uniform(-geo.translation, geo.translation)
    translate_y = rng.uniform(-geo.translation, geo.translation)
    shear = rng.uniform(-geo.shear, geo.shear)
    return AugmentationParams(
        apply_color=bool(apply_color),
        brightness=float(brightness),
        contrast=float(contrast),
        saturation=float(saturation),
        hue=float(hue),
        hflip=bool(hflip),
        vflip=bool(vflip),
        apply_affine=bool(apply_affine),
        angle=float(angle),
        translate_x=float(translate_x),
        translate_y=float(translate_y),
        shear=float(shear),
    )


# ---------------------------------------------------------------------------
# Colour
# ---------------------------------------------------------------------------

def _grey(pixels: np.ndarray) -> np.ndarray:
    return cv2.cvtColor(pixels, cv2.COLOR_RGB2GRAY)


def adjust_brightness(pixels: np.ndarray, delta: float) -> np.ndarray:
    return np.clip(pixels + np.float32(delta), 0.0, 1.0)


def adjust_contrast(pixels: np.ndarray, factor: float) -> np.ndarray:
    mean = np.float32(_grey(pixels).mean())
    return np.clip(mean + np.float32(factor) * (pixels - mean), 0.0, 1.0)


def adjust_saturation(pixels: np.ndarray, factor: float) -> np.ndarray:
    grey = _grey(pixels)[:, :, None]
    return np.clip(grey + np.float32(factor) * (pixels - grey), 0.0, 1.0)


def adjust_hue(pixels: np.ndarray, shift: float) -> np.ndarray:
    """Rotate hue by `shift` turns (float32 HSV keeps H in degrees)."""
    hsv = cv2.cvtColor(pixels, cv2.COLOR_RGB2HSV)
    hsv[:, :, 0] = np.mod(hsv[:, :, 0] + np.float32(shift * 360.0), 360.0)
    return np.clip(cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB), 0.0, 1.0)


def _apply_color(pixels: np.ndarray, params: AugmentationParams) -> np.ndarray:
    pixels = np.ascontiguousarray(pixels, dtype=np.float32)
    if params.brightness != 0.0:
        pixels = adjust_brightness(pixels, params.brightness)
    if params.contrast != 1.0:
        pixels = adjust_contrast(pixels, params.contrast)
    if params.saturation != 1.0:
        pixels = adjust_saturation(pixels, params.saturation)
    if params.hue != 0.0:
        pixels = adjust_hue(pixels, params.hue)
    return pixels


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def affine_matrix(params: AugmentationParams, width: int, height: int) -> np.ndarray:
    """3 x 3 forward matrix: shear, rotate about the centre, then translate."""
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    theta = np.deg2rad(params.angle)
    cos, sin = np.cos(theta), np.sin(theta)

    to_origin = np.array([[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]])
    shear = np.array([[1.0, params.shear, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    rotate = np.array([[cos, -sin, 0.0], [sin, cos, 0.0], [0.0, 0.0, 1.0]])
    back = np.array([
        [1.0, 0.0, cx + params.translate_x * width],
        [0.0, 1.0, cy + params.translate_y * height],
        [0.0, 0.0, 1.0],
    ])
    return back @ rotate @ shear @ to_origin


def _is_identity(matrix: np.ndarray) -> bool:
    return bool(np.array_equal(matrix, np.eye(3)))


def _apply_geometry(pixels: np.ndarray, points: np.ndarray, params: AugmentationParams):
    height, width = pixels.shape[:2]
    points = points.copy()

    if params.hflip:
        pixels = pixels[:, ::-1]
        points[:, 0] = (width - 1) - points[:, 0]
    if params.vflip:
        pixels = pixels[::-1, :]
        points[:, 1] = (height - 1) - points[:, 1]

    if params.apply_affine:
        matrix = affine_matrix(params, width, height)
        if not _is_identity(matrix):
            pixels = cv2.warpAffine(
                np.ascontiguousarray(pixels),
                matrix[:2],
                (width, height),
                flags=cv2.INTER_LINEAR,
                borderMode=cv2.BORDER_CONSTANT,
                borderValue=0,
            )
            pixels = np.clip(pixels, 0.0, 1.0)
            if len(points):
                homogeneous = np.hstack([points, np.ones((len(points), 1))])
                points = (homogeneous @ matrix.T)[:, :2]

    return np.ascontiguousarray(pixels, dtype=np.float32), points


def augment_sample(
    image: ImageSample,
    landmarks: LandmarkSet,
    cfg: AugmentationConfig,
    rng: np.random.Generator,
) -> Tuple[ImageSample, LandmarkSet]:
    """Apply one random draw of `cfg` to an image and its landmarks."""
    params = sample_augmentation(cfg, rng)
    return apply_augmentation(image, landmarks, params)


def apply_augmentation(
    image: ImageSample,
    landmarks: LandmarkSet,
    params: AugmentationParams,
) -> Tuple[ImageSample, LandmarkSet]:
    if image.pixels is None:
        raise DataValidationError(f"{image.path}: pixels not loaded")

    geometric = params.hflip or params.vflip or params.apply_affine
    if not params.apply_color and not geometric:
        return image, landmarks

    pixels = image.pixels
    if params.apply_color:
        pixels = _apply_color(pixels, params)

    points = landmarks.points
    if geometric:
        pixels, points = _apply_geometry(pixels, points, params)

    moved = landmarks.with_points(points)
    kept = moved.select(~moved.out_of_bounds(image.width, image.height))
    return image.with_pixels(pixels.astype(np.float32, copy=False)), kept
