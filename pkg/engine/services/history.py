"""
Per-epoch metric history as JSON lines.
"""
from pathlib import Path
from typing import Dict, List, Optional

from core.utils import append_jsonl, read_jsonl


class MetricHistory:
    """
    One sorted-key record per epoch:
    {stage, fold, epoch, losses, metrics, lr, seed}. No timestamps, so equal
    runs write byte-identical files.
    """

    def __init__(self, path, stage: str, fold: Optional[int], seed: int):
        self.path = Path(path)
        self.stage = stage
        self.fold = fold
        self.seed = int(seed)

    def reset(self, keep_through_epoch: Optional[int] = None):
        """Start over, or keep the records of epochs <= keep_through_epoch (resume)."""
        kept = []
        if keep_through_epoch is not None and self.path.exists():
            kept = [r for r in read_jsonl(self.path) if r["epoch"] <= keep_through_epoch]
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("", encoding="utf-8")
        for record in kept:
            append_jsonl(record, self.path)

    def append(self, epoch: int, losses: Dict[str, float], lr: float, metrics: Optional[Dict[str, float]] = None) -> dict:
        record = {
            "stage": self.stage,
            "fold": self.fold,
            "epoch": int(epoch),
            "losses": {k: float(v) for k, v in losses.items()},
            "metrics": {k: float(v) for k, v in (metrics or {}).items()},
            "lr": float(lr),
            "seed": self.seed,
        }
        append_jsonl(record, self.path)
        return record

    def records(self) -> List[dict]:
        return read_jsonl(self.path)
