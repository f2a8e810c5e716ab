"""
Deterministic "suture phantom" scenes in two visual domains.

A scene is a textured disk (the valve) crossed by smooth sutures near its
rim. The sim and or renders of one scene share every geometric draw and
differ only in palette, lighting gradient and speckle, so their suture
masks are identical.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import cv2
import numpy as np

from core.annotations import save_annotations, write_manifest
from core.exceptions import DataValidationError
from core.folds import make_folds
from core.imaging import write_pixels
from core.schema import Domain, ImageSample, LandmarkKind, LandmarkSet
from core.utils import derive_seed

from . import config

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DomainStyle:
    """Palette and illumination of one rendering domain (RGB in [0, 1])."""
    background: Tuple[float, float, float]
    tissue: Tuple[float, float, float]
    suture: Tuple[float, float, float]
    occluder: Tuple[float, float, float]
    texture_strength: float
    gradient_strength: float
    speckle_std: float


DOMAIN_STYLES: Dict[Domain, DomainStyle] = {
    # silicone phantom: flat pink, even lighting, clean sensor
    Domain.SIM: DomainStyle(
        background=(0.10, 0.08, 0.08),
        tissue=(0.86, 0.62, 0.60),
        suture=(0.15, 0.35, 0.80),
        occluder=(0.70, 0.70, 0.72),
        texture_strength=0.08,
        gradient_strength=0.0,
        speckle_std=0.0,
    ),
    # intra-operative: darker red tissue, green sutures, vignetting and noise
    Domain.OR: DomainStyle(
        background=(0.04, 0.02, 0.02),
        tissue=(0.62, 0.22, 0.18),
        suture=(0.20, 0.62, 0.30),
        occluder=(0.80, 0.80, 0.78),
        texture_strength=0.22,
        gradient_strength=0.45,
        speckle_std=0.03,
    ),
}


@dataclass
class SceneParams:
    width: int = config.SCENE_WIDTH
    height: int = config.SCENE_HEIGHT
    n_sutures: Union[int, Tuple[int, int]] = config.N_SUTURES
    control_jitter: float = config.CONTROL_JITTER
    stroke_width: int = config.STROKE_WIDTH
    occlusion_probability: float = config.OCCLUSION_PROBABILITY
    texture_seed: Optional[int] = None
    styles: Dict[Domain, DomainStyle] = field(default_factory=lambda: dict(DOMAIN_STYLES))

    def __post_init__(self):
        if isinstance(self.n_sutures, int):
            self.n_sutures = (self.n_sutures, self.n_sutures)
        self.n_sutures = tuple(int(n) for n in self.n_sutures)
        low, high = self.n_sutures
        if low < 0 or high < low:
            raise DataValidationError(f"n_sutures range must satisfy 0 <= low <= high, got {self.n_sutures}")
        if self.stroke_width < 1:
            raise DataValidationError(f"stroke_width must be at least 1, got {self.stroke_width}")
        if self.width < 16 or self.height < 16:
            raise DataValidationError(f"Scene must be at least 16x16, got {self.width}x{self.height}")
        if self.control_jitter < 0:
            raise DataValidationError(f"control_jitter must be non-negative, got {self.control_jitter}")
        if not 0.0 <= self.occlusion_probability <= 1.0:
            raise DataValidationError(f"occlusion_probability must lie in [0, 1], got {self.occlusion_probability}")

    @property
    def size(self) -> Tuple[int, int]:
        return self.width, self.height


@dataclass
class SceneGeometry:
    """Every random draw of one scene; rendering is a pure function of it."""
    curves: List[np.ndarray]
    texture: np.ndarray
    occluder_mask: np.ndarray
    gradient_direction: float
    speckle: np.ndarray


def quadratic_curve(start: np.ndarray, control: np.ndarray, end: np.ndarray, samples: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, samples)[:, None]
    return (1 - t) ** 2 * start + 2 * (1 - t) * t * control + t ** 2 * end


def _draw_suture(rng: np.random.Generator, params: SceneParams) -> np.ndarray:
    cx, cy = (params.width - 1) / 2.0, (params.height - 1) / 2.0
    radius = config.VALVE_RADIUS_FRACTION * min(params.width, params.height)

    theta = rng.uniform(0.0, 2 * np.pi)
    gap = rng.uniform(*config.ENDPOINT_ANGLE_GAP) * rng.choice([-1.0, 1.0])
    r_start = radius * rng.uniform(*config.ENDPOINT_RADIUS_RANGE)
    r_end = radius * rng.uniform(*config.ENDPOINT_RADIUS_RANGE)
    start = np.array([cx + r_start * np.cos(theta), cy + r_start * np.sin(theta)])
    end = np.array([cx + r_end * np.cos(theta + gap), cy + r_end * np.sin(theta + gap)])

    # control point pulled toward the valve centre, then jittered
    middle = (start + end) / 2.0
    inward = np.array([cx, cy]) - middle
    control = middle + 0.35 * inward + rng.normal(0.0, params.control_jitter, size=2)

    curve = quadratic_curve(start, control, end, config.CURVE_SAMPLES)
    curve = np.rint(curve)
    curve[:, 0] = np.clip(curve[:, 0], 0, params.width - 1)
    curve[:, 1] = np.clip(curve[:, 1], 0, params.height - 1)
    return curve.astype(np.int32)


def _sample_suture(rng: np.random.Generator, params: SceneParams) -> np.ndarray:
    """
    Integer polyline from entry to exit point.

    Draws are repeated until the rounded endpoints are at least
    MIN_ENDPOINT_SEPARATION pixels apart, so no suture collapses to a point.
    """
    for _ in range(config.MAX_SUTURE_DRAWS):
        curve = _draw_suture(rng, params)
        if np.abs(curve[0] - curve[-1]).max() >= config.MIN_ENDPOINT_SEPARATION:
            return curve
    raise DataValidationError(
        f"Could not place a suture with separated endpoints in a {params.width}x{params.height} scene"
    )


def rasterize_curves(curves: List[np.ndarray], size: Tuple[int, int], stroke_width: int) -> np.ndarray:
    """Binary H x W mask of the polylines."""
    width, height = size
    mask = np.zeros((height, width), dtype=np.uint8)
    if curves:
        cv2.polylines(
            mask,
            [np.asarray(c, dtype=np.int32).reshape(-1, 1, 2) for c in curves],
            isClosed=False,
            color=1,
            thickness=int(stroke_width),
            lineType=cv2.LINE_8,
        )
    return mask


def _sample_texture(rng: np.random.Generator, params: SceneParams) -> np.ndarray:
    noise = rng.normal(0.0, 1.0, size=(params.height, params.width)).astype(np.float32)
    noise = cv2.GaussianBlur(noise, (0, 0), config.TEXTURE_BLUR_SIGMA)
    scale = float(np.abs(noise).max()) or 1.0
    return noise / scale


def _sample_occluders(rng: np.random.Generator, params: SceneParams) -> np.ndarray:
    mask = np.zeros((params.height, params.width), dtype=np.uint8)
    present = rng.random() < params.occlusion_probability
    centre = (int(rng.integers(0, params.width)), int(rng.integers(0, params.height)))
    axes = (
        int(rng.integers(params.width // 16 + 1, params.width // 6 + 2)),
        int(rng.integers(params.height // 16 + 1, params.height // 6 + 2)),
    )
    angle = float(rng.uniform(0.0, 180.0))
    if present:
        cv2.ellipse(mask, centre, axes, angle, 0, 360, color=1, thickness=-1)
    return mask


def sample_geometry(rng: np.random.Generator, params: SceneParams) -> SceneGeometry:
    low, high = params.n_sutures
    n_sutures = int(rng.integers(low, high + 1))
    curves = [_sample_suture(rng, params) for _ in range(n_sutures)]

    texture_rng = rng if params.texture_seed is None else np.random.default_rng(params.texture_seed)
    texture = _sample_texture(texture_rng, params)
    occluders = _sample_occluders(rng, params)
    gradient_direction = float(rng.uniform(0.0, 2 * np.pi))
    speckle = rng.normal(0.0, 1.0, size=(params.height, params.width, 3)).astype(np.float32)
    return SceneGeometry(
        curves=curves,
        texture=texture,
        occluder_mask=occluders,
        gradient_direction=gradient_direction,
        speckle=speckle,
    )


def render(geometry: SceneGeometry, params: SceneParams, style: DomainStyle, mask: np.ndarray) -> np.ndarray:
    """H x W x 3 float32 image in [0, 1]."""
    height, width = params.height, params.width
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float32)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    radius = config.VALVE_RADIUS_FRACTION * min(width, height) * 1.15
    valve = ((xs - cx) ** 2 + (ys - cy) ** 2) <= radius ** 2

    image = np.empty((height, width, 3), dtype=np.float32)
    image[:] = np.asarray(style.background, dtype=np.float32)
    tissue = np.asarray(style.tissue, dtype=np.float32) * (1.0 + style.texture_strength * geometry.texture)[..., None]
    image[valve] = tissue[valve]

    image[mask.astype(bool)] = np.asarray(style.suture, dtype=np.float32)
    occluded = geometry.occluder_mask.astype(bool) & ~mask.astype(bool)
    image[occluded] = np.asarray(style.occluder, dtype=np.float32)

    if style.gradient_strength:
        direction = np.array([np.cos(geometry.gradient_direction), np.sin(geometry.gradient_direction)])
        ramp = ((xs - cx) * direction[0] + (ys - cy) * direction[1]) / max(width, height)
        image *= (1.0 - style.gradient_strength * (ramp + 0.5))[..., None].astype(np.float32)
    if style.speckle_std:
        image += np.float32(style.speckle_std) * geometry.speckle

    return np.clip(image, 0.0, 1.0).astype(np.float32)


def landmarks_from_curves(curves: List[np.ndarray]) -> LandmarkSet:
    points, kinds = [], []
    for curve in curves:
        points.extend([curve[0], curve[-1]])
        kinds.extend([LandmarkKind.ENTRY, LandmarkKind.EXIT])
    return LandmarkSet(points=np.asarray(points, dtype=np.float64).reshape(-1, 2), kinds=tuple(kinds))


def generate_scene(
    rng: np.random.Generator,
    params: SceneParams,
    source_id: str = "synthetic",
) -> Tuple[ImageSample, ImageSample, LandmarkSet, np.ndarray]:
    """
    Render one scene in both domains.

    Returns:
        (sim_image, or_image, landmarks, suture_mask) where the landmarks are
        the 2n curve endpoints and suture_mask is H x W uint8 in {0, 1}
    """
    geometry = sample_geometry(rng, params)
    mask = rasterize_curves(geometry.curves, params.size, params.stroke_width)
    landmarks = landmarks_from_curves(geometry.curves)

    images = {}
    for domain in (Domain.SIM, Domain.OR):
        pixels = render(geometry, params, params.styles[domain], mask)
        images[domain] = ImageSample(
            path=f"<scene:{source_id}:{domain.value}>",
            domain=domain,
            source_id=source_id,
            width=params.width,
            height=params.height,
            pixels=pixels,
        )
    return images[Domain.SIM], images[Domain.OR], landmarks, mask


def scene_polylines(curves: List[np.ndarray]) -> List[np.ndarray]:
    return [np.asarray(c, dtype=np.float64) for c in curves]


@dataclass
class GeneratedDataset:
    manifest_path: Path
    samples: List[ImageSample]
    test_manifest_path: Optional[Path] = None
    test_samples: List[ImageSample] = field(default_factory=list)


def _write_frame(
    out_dir: Path,
    domain: Domain,
    name: str,
    source_id: str,
    seed: int,
    params: SceneParams,
) -> ImageSample:
    rng = np.random.default_rng(seed)
    geometry = sample_geometry(rng, params)
    mask = rasterize_curves(geometry.curves, params.size, params.stroke_width)
    pixels = render(geometry, params, params.styles[domain], mask)

    image_path = out_dir / config.IMAGES_DIR / domain.value / f"{name}.png"
    annotation_path = out_dir / config.ANNOTATIONS_DIR / domain.value / f"{name}.json"
    write_pixels(pixels, image_path)
    save_annotations(
        landmarks_from_curves(geometry.curves),
        annotation_path,
        params.size,
        polylines=scene_polylines(geometry.curves),
        image_path=image_path.name,
    )
    return ImageSample(
        path=str(image_path),
        domain=domain,
        source_id=source_id,
        width=params.width,
        height=params.height,
        annotation_path=str(annotation_path),
    )


def generate_dataset(
    rng: np.random.Generator,
    params: SceneParams,
    n_images: int,
    out_dir,
    n_groups: int = config.DEFAULT_GROUPS,
    k: Optional[int] = None,
    n_test: int = 0,
) -> GeneratedDataset:
    """
    Write `n_images` frames per domain plus annotations and a manifest.

    Each domain gets its own independent scenes (unpaired data). Frames are
    spread over `n_groups` synthetic recordings per domain and assigned to
    `k` (default `n_groups`) group-disjoint folds. With `n_test` > 0, an
    extra or-domain test set from unseen recordings goes to its own manifest.
    """
    if n_images < 1:
        raise DataValidationError(f"n_images must be positive, got {n_images}")
    if n_groups < 1 or n_groups > n_images:
        raise DataValidationError(f"n_groups must lie in [1, n_images], got {n_groups}")
    k = n_groups if k is None else k

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base_seed = int(rng.integers(0, 2 ** 31 - 1))

    samples: List[ImageSample] = []
    for domain in (Domain.SIM, Domain.OR):
        frames = [
            _write_frame(
                out_dir,
                domain,
                name=f"{index:05d}",
                source_id=f"{domain.value}-rec{index % n_groups:02d}",
                seed=derive_seed(base_seed, domain.value, index),
                params=params,
            )
            for index in range(n_images)
        ]
        split = make_folds(frames, k)
        for sample in frames:
            sample.fold_id = split.assignments[sample.source_id]
        samples.extend(frames)
        logger.info(f"Generated {len(frames)} {domain.value} frames in {k} folds under {out_dir}")

    manifest_path = write_manifest(samples, out_dir / config.MANIFEST_NAME)
    dataset = GeneratedDataset(manifest_path=manifest_path, samples=samples)

    if n_test > 0:
        test_groups = max(1, min(n_groups, n_test))
        dataset.test_samples = [
            _write_frame(
                out_dir,
                Domain.OR,
                name=f"test-{index:05d}",
                source_id=f"or-test{index % test_groups:02d}",
                seed=derive_seed(base_seed, "test", index),
                params=params,
            )
            for index in range(n_test)
        ]
        dataset.test_manifest_path = write_manifest(dataset.test_samples, out_dir / config.TEST_MANIFEST_NAME)
        logger.info(f"Generated {n_test} held-out or frames")

    return dataset
