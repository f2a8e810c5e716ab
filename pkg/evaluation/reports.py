"""
Evaluation report files: JSON documents and table-layout CSV.
"""
import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from core.exceptions import DataValidationError, MissingArtifactError
from core.utils import read_json, write_json

from . import config
from .matching import MatchResult
from .metrics import MetricsReport, aggregate_folds, compute_metrics, sum_matches

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
TABLE_METRIC_ORDER = ("ppv", "tpr", "f1", "mse", "dice")


@dataclass
class ImageEvaluation:
    image: str
    source_id: str
    fold: int
    match: MatchResult
    n_pred: int = 0
    n_gt: int = 0

    def to_dict(self) -> dict:
        return {
            "image": self.image,
            "source_id": self.source_id,
            "fold": self.fold,
            "n_pred": self.n_pred,
            "n_gt": self.n_gt,
            **self.match.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ImageEvaluation":
        return cls(
            image=data["image"],
            source_id=data["source_id"],
            fold=int(data["fold"]),
            match=MatchResult.from_dict(data),
            n_pred=int(data.get("n_pred", 0)),
            n_gt=int(data.get("n_gt", 0)),
        )


@dataclass
class EvaluationReport:
    """One evaluated experiment row: per-image results and the fold summary."""
    name: str
    target: str
    summary: MetricsReport
    images: List[ImageEvaluation] = field(default_factory=list)
    mask_pairs: List[dict] = field(default_factory=list)
    settings: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "name": self.name,
            "target": self.target,
            "settings": self.settings,
            "summary": self.summary.to_dict(),
            "images": [image.to_dict() for image in self.images],
            "mask_pairs": self.mask_pairs,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvaluationReport":
        if data.get("version") != REPORT_VERSION:
            raise DataValidationError(f"Unsupported report version {data.get('version')!r}")
        return cls(
            name=data["name"],
            target=data["target"],
            summary=MetricsReport.from_dict(data["summary"]),
            images=[ImageEvaluation.from_dict(d) for d in data.get("images", [])],
            mask_pairs=list(data.get("mask_pairs", [])),
            settings=dict(data.get("settings", {})),
        )


def build_report(name: str, target: str, images: Sequence[ImageEvaluation], **settings) -> EvaluationReport:
    """
    Group image results by fold, sum their counts within each fold and
    aggregate PPV/TPR/F1 across folds.
    """
    if not images:
        raise DataValidationError(f"Report {name!r} has no evaluated images")
    by_fold = defaultdict(list)
    for image in images:
        by_fold[image.fold].append(image.match)
    folds = sorted(by_fold)
    summary = aggregate_folds([compute_metrics(sum_matches(by_fold[f])) for f in folds], folds)
    return EvaluationReport(name=name, target=target, summary=summary, images=list(images), settings=settings)


def write_report(report: EvaluationReport, out_dir) -> Path:
    path = write_json(report.to_dict(), Path(out_dir) / config.REPORT_FILE)
    mean = report.summary.mean
    logger.info(f"[REPORT] {report.name}: " + ", ".join(f"{k} {v:.4f}" for k, v in mean.items()) + f" -> {path}")
    return path


def load_report(path) -> EvaluationReport:
    path = Path(path)
    if path.is_dir():
        path = path / config.REPORT_FILE
    return EvaluationReport.from_dict(read_json(path))


def find_reports(root) -> List[EvaluationReport]:
    """Every report.json below `root`, ordered by path."""
    root = Path(root)
    if not root.exists():
        raise MissingArtifactError(f"Report directory not found: {root}")
    return [load_report(p) for p in sorted(root.rglob(config.REPORT_FILE))]


def fold_label(fold: int) -> str:
    return "test" if fold < 0 else f"f{fold + 1}"


def _cell(value: Optional[float], metric: str) -> str:
    if value is None:
        return ""
    scale, decimals = config.TABLE_FORMATS.get(metric, (1.0, 4))
    return f"{value * scale:.{decimals}f}"


def table_rows(reports: Sequence[EvaluationReport]) -> List[List[str]]:
    """
    Rows metric x experiment; columns are the folds seen in any report plus
    a `mean ± std` column. PPV and TPR are printed in percent.
    """
    folds = sorted({f for r in reports for f in r.summary.fold_ids})
    header = ["metric", "experiment"] + [fold_label(f) for f in folds] + ["mean ± std"]
    rows = [header]
    for metric in TABLE_METRIC_ORDER:
        for report in reports:
            summary = report.summary
            if metric not in summary.per_fold:
                continue
            values = dict(zip(summary.fold_ids, summary.per_fold[metric]))
            rows.append(
                [metric.upper() if metric != "dice" else "Dice", report.name]
                + [_cell(values.get(f), metric) for f in folds]
                + [f"{_cell(summary.mean[metric], metric)} ± {_cell(summary.std[metric], metric)}"]
            )
    return rows


def write_table(reports: Sequence[EvaluationReport], path) -> Path:
    if not reports:
        raise MissingArtifactError("No evaluation reports to tabulate")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(table_rows(reports))
    return path
