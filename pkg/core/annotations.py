"""
Annotation and manifest I/O.

Annotation files are a labelme-compatible JSON subset:
    {"imageWidth": int, "imageHeight": int,
     "shapes": [{"label": "entry"|"exit", "points": [[x, y]], "shape_type": "point",
                 "difficulty": "easy"|"medium"|"hard"},
                {"label": "suture", "points": [[x, y], ...], "shape_type": "linestrip"}]}
Coordinates are stored at the annotation's native resolution and scaled to
the requested working resolution at load time.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .exceptions import AnnotationParseError, DataValidationError, MissingArtifactError
from .schema import DEFAULT_HEIGHT, DEFAULT_WIDTH, Difficulty, Domain, ImageSample, LandmarkKind, LandmarkSet

logger = logging.getLogger(__name__)

POINT_LABELS = {kind.value for kind in LandmarkKind}
SUTURE_LABEL = "suture"
MANIFEST_FIELDS = ["path", "domain", "source_id", "fold", "annotation_path", "width", "height"]


def _read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"Annotation file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            document = json.load(fh)
    except json.JSONDecodeError as e:
        raise AnnotationParseError(f"{path}: invalid JSON ({str(e)})")
    except OSError as e:
        raise MissingArtifactError(f"{path}: could not be read ({str(e)})")

    if not isinstance(document, dict):
        raise AnnotationParseError(f"{path}: top level must be an object")
    for key in ("imageWidth", "imageHeight"):
        value = document.get(key)
        if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
            raise AnnotationParseError(f"{path}: '{key}' must be a positive integer, got {value!r}")
    shapes = document.get("shapes", [])
    if not isinstance(shapes, list):
        raise AnnotationParseError(f"{path}: 'shapes' must be a list")
    return document


def _scale(points: np.ndarray, native_size: Tuple[int, int], image_size: Tuple[int, int]) -> np.ndarray:
    native_w, native_h = native_size
    width, height = image_size
    scaled = points.copy()
    # multiply before dividing so proportional integer positions map exactly
    scaled[:, 0] = (scaled[:, 0] * width) / native_w
    scaled[:, 1] = (scaled[:, 1] * height) / native_h
    return scaled


def _parse_xy(path, index, raw) -> List[float]:
    if not (isinstance(raw, (list, tuple)) and len(raw) == 2):
        raise AnnotationParseError(f"{path}: shapes[{index}] has a malformed coordinate {raw!r}")
    try:
        x, y = float(raw[0]), float(raw[1])
    except (TypeError, ValueError):
        raise AnnotationParseError(f"{path}: shapes[{index}] has a non-numeric coordinate {raw!r}")
    if not (np.isfinite(x) and np.isfinite(y)):
        raise AnnotationParseError(f"{path}: shapes[{index}] has a non-finite coordinate {raw!r}")
    return [x, y]


def load_annotations(path, image_size: Tuple[int, int]) -> LandmarkSet:
    """
    Load suture entry/exit points, scaled to `image_size` = (W, H).

    Raises:
        AnnotationParseError: malformed file or record (names the record)
        DataValidationError: a scaled point falls outside the frame
    """
    document = _read_json(path)
    native_size = (document["imageWidth"], document["imageHeight"])

    points, kinds, difficulty = [], [], []
    for index, shape in enumerate(document.get("shapes", [])):
        if not isinstance(shape, dict):
            raise AnnotationParseError(f"{path}: shapes[{index}] is not an object")
        shape_type = shape.get("shape_type", "point")
        if shape_type != "point":
            continue
        label = shape.get("label")
        if label not in POINT_LABELS:
            raise AnnotationParseError(f"{path}: shapes[{index}] has unknown point label {label!r}")
        raw_points = shape.get("points")
        if not isinstance(raw_points, list) or len(raw_points) != 1:
            raise AnnotationParseError(f"{path}: shapes[{index}] point shape needs exactly one [x, y] pair")
        points.append(_parse_xy(path, index, raw_points[0]))
        kinds.append(LandmarkKind(label))
        raw_difficulty = shape.get("difficulty")
        try:
            difficulty.append(Difficulty(raw_difficulty) if raw_difficulty is not None else None)
        except ValueError:
            raise AnnotationParseError(f"{path}: shapes[{index}] has unknown difficulty {raw_difficulty!r}")

    array = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if tuple(native_size) != tuple(image_size):
        array = _scale(array, native_size, image_size)

    landmarks = LandmarkSet(
        points=array,
        kinds=tuple(kinds),
        difficulty=tuple(difficulty) if any(d is not None for d in difficulty) else None,
        native_size=native_size,
    )
    try:
        landmarks.validate_bounds(*image_size)
    except DataValidationError as e:
        raise DataValidationError(f"{path}: {e.message}", errors=e.errors)
    return landmarks


def load_suture_polylines(path, image_size: Tuple[int, int]) -> List[np.ndarray]:
    """Load `linestrip` suture shapes as K x 2 arrays scaled to `image_size`."""
    document = _read_json(path)
    native_size = (document["imageWidth"], document["imageHeight"])
    polylines = []
    for index, shape in enumerate(document.get("shapes", [])):
        if not isinstance(shape, dict) or shape.get("shape_type") != "linestrip":
            continue
        raw_points = shape.get("points")
        if not isinstance(raw_points, list) or len(raw_points) < 2:
            raise AnnotationParseError(f"{path}: shapes[{index}] linestrip needs at least two points")
        line = np.asarray([_parse_xy(path, index, p) for p in raw_points], dtype=np.float64)
        if tuple(native_size) != tuple(image_size):
            line = _scale(line, native_size, image_size)
        polylines.append(line)
    return polylines


def save_annotations(
    landmarks: LandmarkSet,
    path,
    image_size: Tuple[int, int],
    polylines: Optional[Iterable[np.ndarray]] = None,
    image_path: Optional[str] = None,
) -> Path:
    """
    Write landmarks (and optional suture polylines) at resolution `image_size`.

    Coordinates are written unscaled, so loading back at the same size is
    bit-identical.
    """
    path = Path(path)
    shapes = []
    kinds = landmarks.kinds or (None,) * len(landmarks)
    difficulty = landmarks.difficulty or (None,) * len(landmarks)
    for (x, y), kind, level in zip(landmarks.points, kinds, difficulty):
        shape = {
            "label": (kind or LandmarkKind.ENTRY).value,
            "points": [[float(x), float(y)]],
            "shape_type": "point",
        }
        if level is not None:
            shape["difficulty"] = level.value
        shapes.append(shape)
    for line in polylines or []:
        shapes.append({
            "label": SUTURE_LABEL,
            "points": [[float(x), float(y)] for x, y in np.asarray(line)],
            "shape_type": "linestrip",
        })

    document = {
        "imageWidth": int(image_size[0]),
        "imageHeight": int(image_size[1]),
        "imagePath": image_path,
        "shapes": shapes,
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(document, fh, indent=2)
    except OSError as e:
        raise MissingArtifactError(f"Could not write annotations to {path}: {str(e)}")
    return path


# ---------------------------------------------------------------------------
# Dataset manifests (JSON lines or CSV, one record per frame)
# ---------------------------------------------------------------------------

def _resolve(base: Path, value: Optional[str]) -> Optional[str]:
    if value in (None, ""):
        return None
    candidate = Path(value)
    return str(candidate if candidate.is_absolute() else (base / candidate))


def _relative(base: Path, value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    try:
        return str(Path(value).resolve().relative_to(base.resolve()))
    except ValueError:
        return str(value)


def _sample_from_record(base: Path, record: dict, line_no: int, manifest_path) -> ImageSample:
    missing = [key for key in ("path", "domain", "source_id") if record.get(key) in (None, "")]
    if missing:
        raise AnnotationParseError(f"{manifest_path}: record {line_no} is missing {', '.join(missing)}")
    try:
        return ImageSample(
            path=_resolve(base, record["path"]),
            domain=Domain(record["domain"]),
            source_id=str(record["source_id"]),
            fold_id=int(record.get("fold", -1) if record.get("fold") not in (None, "") else -1),
            annotation_path=_resolve(base, record.get("annotation_path")),
            width=int(record.get("width") or 0) or DEFAULT_WIDTH,
            height=int(record.get("height") or 0) or DEFAULT_HEIGHT,
        )
    except (ValueError, TypeError) as e:
        raise AnnotationParseError(f"{manifest_path}: record {line_no} is invalid ({str(e)})")


def read_manifest(path) -> List[ImageSample]:
    """Read a manifest; relative paths resolve against the manifest's directory."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"Manifest not found: {path}")
    base = path.parent
    samples = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        if path.suffix.lower() == ".csv":
            for line_no, record in enumerate(csv.DictReader(fh), start=1):
                samples.append(_sample_from_record(base, record, line_no, path))
        else:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise AnnotationParseError(f"{path}: record {line_no} is not valid JSON ({str(e)})")
                samples.append(_sample_from_record(base, record, line_no, path))
    logger.info(f"Read {len(samples)} manifest records from {path}")
    return samples


def write_manifest(samples: Iterable[ImageSample], path) -> Path:
    """Write a manifest with paths stored relative to the manifest's directory."""
    path = Path(path)
    base = path.parent
    base.mkdir(parents=True, exist_ok=True)
    records = []
    for sample in samples:
        record = sample.to_record()
        record["path"] = _relative(base, record["path"])
        record["annotation_path"] = _relative(base, record["annotation_path"])
        records.append(record)

    with open(path, "w", encoding="utf-8", newline="") as fh:
        if path.suffix.lower() == ".csv":
            writer = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS)
            writer.writeheader()
            for record in records:
                writer.writerow({k: ("" if record[k] is None else record[k]) for k in MANIFEST_FIELDS})
        else:
            for record in records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return path
