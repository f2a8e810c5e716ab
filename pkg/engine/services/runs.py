"""
Run registry bookkeeping.

The registry is advisory: when the database is unavailable or unmigrated the
stage logs a warning and carries on with its files.
"""
from typing import Optional

from django.db import DatabaseError
from loguru import logger

from ..models import TrainRun


def start_run(experiment_id: str, stage: str, fold: Optional[int], seed: int, config: dict,
              domain: str = "", checkpoint_dir: str = "", history_path: str = "") -> Optional[TrainRun]:
    try:
        return TrainRun.objects.create(
            experiment_id=experiment_id,
            stage=stage,
            domain=domain,
            fold=fold,
            seed=seed,
            config=config,
            checkpoint_dir=str(checkpoint_dir),
            history_path=str(history_path),
        )
    except DatabaseError as e:
        logger.warning("Run registry unavailable, continuing without it: {}", str(e))
        return None


def update_run(run: Optional[TrainRun], **fields):
    if run is None:
        return
    for name, value in fields.items():
        setattr(run, name, value)
    try:
        run.save(update_fields=[*fields.keys(), "updated_at"])
    except DatabaseError as e:
        logger.warning("Could not update run {}: {}", run.pk, str(e))


def finish_run(run: Optional[TrainRun], error: Optional[BaseException] = None):
    if error is None:
        update_run(run, status="completed")
    else:
        update_run(run, status="failed", error=str(error))
