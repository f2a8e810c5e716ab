"""
Data model for endoscopic frames, suture landmarks and heatmaps.
"""
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .exceptions import DataValidationError


class Domain(str, Enum):
    """Image domains."""
    SIM = "sim"
    OR = "or"

    @property
    def other(self) -> "Domain":
        return Domain.OR if self is Domain.SIM else Domain.SIM


class LandmarkKind(str, Enum):
    """Where the suture meets tissue."""
    ENTRY = "entry"
    EXIT = "exit"


class Difficulty(str, Enum):
    """Annotator-reported labeling difficulty."""
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


# Default working resolution (W, H), aspect ratio of the 1920x1080 recordings
DEFAULT_WIDTH = 512
DEFAULT_HEIGHT = 288


@dataclass
class ImageSample:
    """
    One RGB frame with its provenance.

    `pixels` is None for manifest entries that have not been loaded yet;
    once present it is an H x W x 3 float32 array in [0, 1].
    """
    path: str
    domain: Domain
    source_id: str
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    fold_id: int = -1
    annotation_path: Optional[str] = None
    pixels: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.domain = Domain(self.domain)
        if self.width <= 0 or self.height <= 0:
            raise DataValidationError(f"Image size must be positive, got {self.width}x{self.height}")
        if self.pixels is not None:
            self._validate_pixels(self.pixels)

    def _validate_pixels(self, pixels: np.ndarray):
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise DataValidationError(f"{self.path}: expected H x W x 3 pixels, got shape {pixels.shape}")
        if pixels.shape[0] != self.height or pixels.shape[1] != self.width:
            raise DataValidationError(
                f"{self.path}: pixels are {pixels.shape[1]}x{pixels.shape[0]}, "
                f"sample declares {self.width}x{self.height}"
            )
        if pixels.size and (float(pixels.min()) < 0.0 or float(pixels.max()) > 1.0):
            raise DataValidationError(f"{self.path}: pixel values must lie in [0, 1]")

    @property
    def size(self) -> Tuple[int, int]:
        return self.width, self.height

    def with_pixels(self, pixels: np.ndarray, **changes) -> "ImageSample":
        """Copy of this sample carrying new pixels (and optional field changes)."""
        sample = replace(self, pixels=None, **changes)
        sample._validate_pixels(pixels)
        sample.pixels = pixels
        return sample

    def to_record(self) -> dict:
        """Manifest record (pixels are never serialized)."""
        return {
            "path": self.path,
            "domain": self.domain.value,
            "source_id": self.source_id,
            "fold": self.fold_id,
            "annotation_path": self.annotation_path,
            "width": self.width,
            "height": self.height,
        }


@dataclass
class LandmarkSet:
    """
    Suture entry/exit points in pixel coordinates (x to the right, y down).

    `points` is an N x 2 float64 array; `kinds` and `difficulty` are optional
    per-point tags aligned with `points`.
    """
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.float64))
    kinds: Optional[Tuple[Optional[LandmarkKind], ...]] = None
    difficulty: Optional[Tuple[Optional[Difficulty], ...]] = None
    native_size: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.size == 0:
            points = points.reshape(0, 2)
        if points.ndim != 2 or points.shape[1] != 2:
            raise DataValidationError(f"Landmark points must be N x 2, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise DataValidationError("Landmark coordinates must be finite")
        self.points = points
        for name in ("kinds", "difficulty"):
            tags = getattr(self, name)
            if tags is not None and len(tags) != len(points):
                raise DataValidationError(f"{name} has {len(tags)} entries for {len(points)} points")

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def out_of_bounds(self, width: int, height: int) -> np.ndarray:
        """Boolean mask of points outside [0, W) x [0, H)."""
        x, y = self.points[:, 0], self.points[:, 1]
        return (x < 0) | (x >= width) | (y < 0) | (y >= height)

    def validate_bounds(self, width: int, height: int) -> "LandmarkSet":
        bad = self.out_of_bounds(width, height)
        if bad.any():
            listed = [tuple(float(v) for v in p) for p in self.points[bad]]
            raise DataValidationError(
                f"{int(bad.sum())} landmark(s) outside the {width}x{height} frame",
                errors={"points": listed},
            )
        return self

    def select(self, keep: np.ndarray) -> "LandmarkSet":
        """Subset of points selected by a boolean mask, tags carried along."""
        keep = np.asarray(keep, dtype=bool)

        def _pick(tags):
            if tags is None:
                return None
            return tuple(t for t, k in zip(tags, keep) if k)

        return LandmarkSet(
            points=self.points[keep],
            kinds=_pick(self.kinds),
            difficulty=_pick(self.difficulty),
            native_size=self.native_size,
        )

    def with_points(self, points: np.ndarray) -> "LandmarkSet":
        return replace(self, points=np.asarray(points, dtype=np.float64))


@dataclass
class HeatmapTensor:
    """Single-channel H x W map in [0, 1] with the Gaussian width used to render it."""
    values: np.ndarray
    sigma: float = 2.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataValidationError(f"Heatmap must be H x W, got shape {values.shape}")
        if values.size and (float(values.min()) < 0.0 or float(values.max()) > 1.0):
            raise DataValidationError("Heatmap values must lie in [0, 1]")
        self.values = values

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape
