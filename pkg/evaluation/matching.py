"""
One-to-one matching of predicted and annotated landmarks.
"""
from dataclasses import dataclass, field
from typing import List, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from core.exceptions import DataValidationError
from core.schema import LandmarkSet

from . import config


@dataclass(frozen=True)
class MatchedPair:
    pred_index: int
    gt_index: int
    distance: float

    def to_dict(self) -> dict:
        return {"pred": self.pred_index, "gt": self.gt_index, "distance": self.distance}


@dataclass
class MatchResult:
    """
    Counts of one matching run.

    tp + fn equals the number of ground-truth points and tp + fp the number
    of predictions; every pair distance is below the matching radius.
    """
    tp: int
    fp: int
    fn: int
    pairs: List[MatchedPair] = field(default_factory=list)

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise DataValidationError(f"Match counts must be non-negative, got {self.tp}/{self.fp}/{self.fn}")

    def __add__(self, other: "MatchResult") -> "MatchResult":
        # summed counts; pair indices are only meaningful per image
        return MatchResult(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def unmatched_predictions(self) -> List[int]:
        matched = {p.pred_index for p in self.pairs}
        return [i for i in range(self.tp + self.fp) if i not in matched]

    @property
    def unmatched_ground_truth(self) -> List[int]:
        matched = {p.gt_index for p in self.pairs}
        return [i for i in range(self.tp + self.fn) if i not in matched]

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "pairs": [p.to_dict() for p in self.pairs]}

    @classmethod
    def from_dict(cls, data: dict) -> "MatchResult":
        pairs = [MatchedPair(int(p["pred"]), int(p["gt"]), float(p["distance"])) for p in data.get("pairs", [])]
        return cls(int(data["tp"]), int(data["fp"]), int(data["fn"]), pairs)


def _as_points(value: Union[LandmarkSet, np.ndarray]) -> np.ndarray:
    points = value.points if isinstance(value, LandmarkSet) else np.asarray(value, dtype=np.float64)
    return points.reshape(-1, 2)


def candidate_pairs(pred: np.ndarray, gt: np.ndarray, radius: float) -> Tuple[np.ndarray, np.ndarray]:
    """(pred, gt) index pairs closer than `radius`, sorted by (distance, pred, gt)."""
    distances = cdist(pred, gt)
    rows, cols = np.nonzero(distances < radius)
    order = np.lexsort((cols, rows, distances[rows, cols]))
    return np.stack([rows[order], cols[order]], axis=1), distances


def match_points(
    pred: Union[LandmarkSet, np.ndarray],
    gt: Union[LandmarkSet, np.ndarray],
    radius: float = config.MATCH_RADIUS,
) -> MatchResult:
    """
    Greedy one-to-one matching in ascending distance order.

    A pair counts only if its Euclidean distance is strictly below
    `radius`. Predictions left over (including ones near an already matched
    ground-truth point) are false positives; unmatched ground truth points
    are false negatives.
    """
    if radius <= 0:
        raise DataValidationError(f"Matching radius must be positive, got {radius}")
    pred_points, gt_points = _as_points(pred), _as_points(gt)
    n_pred, n_gt = len(pred_points), len(gt_points)
    if n_pred == 0 or n_gt == 0:
        return MatchResult(tp=0, fp=n_pred, fn=n_gt)

    candidates, distances = candidate_pairs(pred_points, gt_points, radius)
    used_pred, used_gt = set(), set()
    pairs = []
    for i, j in candidates:
        if i in used_pred or j in used_gt:
            continue
        used_pred.add(i)
        used_gt.add(j)
        pairs.append(MatchedPair(int(i), int(j), float(distances[i, j])))
    tp = len(pairs)
    return MatchResult(tp=tp, fp=n_pred - tp, fn=n_gt - tp, pairs=pairs)
