"""
Group-disjoint k-fold cross-validation splits.

All frames that share a `source_id` (one surgery, one recording, both
stereo views) land in the same fold.
"""
import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Dict, List, Sequence

from .exceptions import ConfigurationError, LeakageError
from .schema import ImageSample

logger = logging.getLogger(__name__)


@dataclass
class FoldSplit:
    k: int
    assignments: Dict[str, int]
    train_indices: List[List[int]]
    val_indices: List[List[int]]
    audit: Dict[str, object] = field(default_factory=dict)

    def train(self, fold: int) -> List[int]:
        self._check_fold(fold)
        return self.train_indices[fold]

    def val(self, fold: int) -> List[int]:
        self._check_fold(fold)
        return self.val_indices[fold]

    def _check_fold(self, fold: int):
        if not 0 <= fold < self.k:
            raise ConfigurationError(f"Fold {fold} does not exist (k={self.k})")

    def check_hygiene(self, samples: Sequence[ImageSample]):
        """Raise LeakageError if any fold trains on a group it validates on."""
        if self.k == 1:
            return
        for fold in range(self.k):
            train_groups = {samples[i].source_id for i in self.train_indices[fold]}
            val_groups = {samples[i].source_id for i in self.val_indices[fold]}
            shared = sorted(train_groups & val_groups)
            if shared:
                raise LeakageError(
                    f"Fold {fold} trains and validates on the same source groups",
                    errors={"source_ids": shared},
                )


def make_folds(samples: Sequence[ImageSample], k: int) -> FoldSplit:
    """
    Split `samples` into k group-disjoint folds.

    Groups are taken largest first (ties by id) and each goes to the fold
    with the fewest samples so far (ties to the lowest index). With k = 1
    the single fold trains and validates on everything.

    Raises:
        ConfigurationError: k < 1, a sample without source_id, or fewer
            distinct groups than folds
    """
    if k < 1:
        raise ConfigurationError(f"Number of folds must be at least 1, got {k}")

    groups: Dict[str, List[int]] = defaultdict(list)
    for index, sample in enumerate(samples):
        if not sample.source_id:
            raise ConfigurationError(f"Sample {sample.path} has no source_id")
        groups[sample.source_id].append(index)

    if len(groups) < k:
        raise ConfigurationError(
            f"Cannot build {k} group-disjoint folds from {len(groups)} source group(s)"
        )

    everything = list(range(len(samples)))
    if k == 1:
        assignments = {group: 0 for group in groups}
        return FoldSplit(
            k=1,
            assignments=assignments,
            train_indices=[everything],
            val_indices=[list(everything)],
            audit={"groups_per_fold": [sorted(groups)], "sizes": [len(everything)]},
        )

    ordered = sorted(groups.items(), key=lambda item: (-len(item[1]), item[0]))
    sizes = [0] * k
    members: List[List[str]] = [[] for _ in range(k)]
    assignments = {}
    for group, indices in ordered:
        fold = min(range(k), key=lambda f: (sizes[f], f))
        assignments[group] = fold
        members[fold].append(group)
        sizes[fold] += len(indices)

    val_indices = [
        sorted(i for g in members[fold] for i in groups[g]) for fold in range(k)
    ]
    train_indices = [
        sorted(i for other in range(k) if other != fold for i in val_indices[other])
        for fold in range(k)
    ]

    split = FoldSplit(
        k=k,
        assignments=assignments,
        train_indices=train_indices,
        val_indices=val_indices,
        audit={"groups_per_fold": [sorted(m) for m in members], "sizes": sizes},
    )
    split.check_hygiene(samples)
    logger.info(f"Built {k} folds with sizes {sizes}")
    return split


def apply_folds(samples: Sequence[ImageSample], split: FoldSplit) -> List[ImageSample]:
    """Copies of `samples` with `fold_id` set from the split's assignments."""
    return [replace(s, fold_id=split.assignments[s.source_id]) for s in samples]


def split_from_manifest(samples: Sequence[ImageSample]) -> FoldSplit:
    """Rebuild a FoldSplit from the `fold` ids already stored in a manifest."""
    folds = sorted({s.fold_id for s in samples})
    if not folds or folds[0] < 0:
        raise ConfigurationError("Manifest samples must all carry a fold id >= 0")
    k = folds[-1] + 1
    if folds != list(range(k)):
        raise ConfigurationError(f"Manifest fold ids must be contiguous from 0, got {folds}")

    assignments = {}
    for sample in samples:
        previous = assignments.setdefault(sample.source_id, sample.fold_id)
        if previous != sample.fold_id:
            raise LeakageError(
                f"Source group {sample.source_id} appears in folds {previous} and {sample.fold_id}"
            )

    if k == 1:
        everything = list(range(len(samples)))
        return FoldSplit(k=1, assignments=assignments, train_indices=[everything], val_indices=[list(everything)])

    val_indices = [[i for i, s in enumerate(samples) if s.fold_id == fold] for fold in range(k)]
    train_indices = [[i for i, s in enumerate(samples) if s.fold_id != fold] for fold in range(k)]
    split = FoldSplit(k=k, assignments=assignments, train_indices=train_indices, val_indices=val_indices)
    split.check_hygiene(samples)
    return split
