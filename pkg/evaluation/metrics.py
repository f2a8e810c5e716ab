"""
PPV / TPR / F1 and their aggregation over cross-validation folds.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from core.exceptions import DataValidationError

from .matching import MatchResult

DETECTION_METRICS = ("ppv", "tpr", "f1")


def safe_ratio(numerator: float, denominator: float) -> float:
    return float(numerator) / float(denominator) if denominator else 0.0


def f1_score(ppv: float, tpr: float) -> float:
    """Harmonic mean 2 * PPV * TPR / (PPV + TPR), 0 when both are 0."""
    return safe_ratio(2.0 * ppv * tpr, ppv + tpr)


@dataclass(frozen=True)
class DetectionMetrics:
    ppv: float
    tpr: float
    f1: float
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @classmethod
    def from_rates(cls, ppv: float, tpr: float) -> "DetectionMetrics":
        """Metrics from published rates (no counts behind them)."""
        return cls(ppv=float(ppv), tpr=float(tpr), f1=f1_score(ppv, tpr))

    def to_dict(self) -> dict:
        return {"ppv": self.ppv, "tpr": self.tpr, "f1": self.f1, "tp": self.tp, "fp": self.fp, "fn": self.fn}


def compute_metrics(match: MatchResult) -> DetectionMetrics:
    ppv = safe_ratio(match.tp, match.tp + match.fp)
    tpr = safe_ratio(match.tp, match.tp + match.fn)
    return DetectionMetrics(ppv=ppv, tpr=tpr, f1=f1_score(ppv, tpr), tp=match.tp, fp=match.fp, fn=match.fn)


def sum_matches(matches: Iterable[MatchResult]) -> MatchResult:
    total = MatchResult(0, 0, 0)
    for match in matches:
        total = total + match
    return total


@dataclass
class MetricsReport:
    """Per-fold values of each metric with their mean and population std across folds."""
    fold_ids: List[int]
    per_fold: Dict[str, List[float]]
    mean: Dict[str, float]
    std: Dict[str, float]
    counts: List[dict] = field(default_factory=list)

    @property
    def metric_names(self) -> List[str]:
        return list(self.per_fold)

    def to_dict(self) -> dict:
        return {
            "folds": self.fold_ids,
            "per_fold": self.per_fold,
            "mean": self.mean,
            "std": self.std,
            "counts": self.counts,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(
            fold_ids=list(data["folds"]),
            per_fold={k: list(v) for k, v in data["per_fold"].items()},
            mean=dict(data["mean"]),
            std=dict(data["std"]),
            counts=list(data.get("counts", [])),
        )


def aggregate_values(per_fold: Dict[str, Sequence[float]], fold_ids: Optional[Sequence[int]] = None,
                     counts: Optional[List[dict]] = None) -> MetricsReport:
    """Mean and population std of each named per-fold series."""
    lengths = {len(values) for values in per_fold.values()}
    if not per_fold or lengths == {0}:
        raise DataValidationError("Cannot aggregate metrics over zero folds")
    if len(lengths) != 1:
        raise DataValidationError(f"Metric series have different fold counts: {sorted(lengths)}")
    n_folds = lengths.pop()
    fold_ids = list(range(n_folds)) if fold_ids is None else [int(f) for f in fold_ids]
    if len(fold_ids) != n_folds:
        raise DataValidationError(f"{len(fold_ids)} fold ids for {n_folds} folds")
    series = {name: [float(v) for v in values] for name, values in per_fold.items()}
    return MetricsReport(
        fold_ids=fold_ids,
        per_fold=series,
        mean={name: float(np.mean(values)) for name, values in series.items()},
        std={name: float(np.std(values)) for name, values in series.items()},
        counts=counts or [],
    )


def aggregate_folds(per_fold: Sequence[DetectionMetrics], fold_ids: Optional[Sequence[int]] = None) -> MetricsReport:
    """
    Mean +/- population std of PPV, TPR and F1 across folds.

    Each entry is one fold's metrics, computed from that fold's summed
    image-level counts (see `compute_metrics(sum_matches(...))`).

    Raises:
        DataValidationError: no folds
    """
    if not per_fold:
        raise DataValidationError("Cannot aggregate metrics over zero folds")
    return aggregate_values(
        {name: [getattr(m, name) for m in per_fold] for name in DETECTION_METRICS},
        fold_ids,
        counts=[{"tp": m.tp, "fp": m.fp, "fn": m.fn} for m in per_fold],
    )
