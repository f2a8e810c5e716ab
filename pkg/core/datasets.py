"""
Torch datasets over manifests.

Per-item randomness comes from derive_seed(seed, epoch, index), so a batch
is reproducible for a fixed seed whatever the number of loader workers.
"""
import logging
from typing import List, Optional, Sequence

import numpy as np
import torch
from torch.utils.data import Dataset

from .annotations import load_annotations
from .augmentation import AugmentationConfig, augment_sample
from .exceptions import ConfigurationError
from .heatmaps import render_heatmap
from .imaging import load_image
from .normalization import NormalizationTarget, normalize_for
from .schema import ImageSample, LandmarkSet
from .utils import derive_seed

logger = logging.getLogger(__name__)


def load_landmarks(sample: ImageSample) -> LandmarkSet:
    """Landmarks for a sample at its working resolution (empty if unannotated)."""
    if not sample.annotation_path:
        return LandmarkSet()
    return load_annotations(sample.annotation_path, sample.size)


def to_chw(pixels: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(pixels.transpose(2, 0, 1), dtype=np.float32))


class LandmarkDataset(Dataset):
    """
    Images with Gaussian target heatmaps.

    Items are dicts {"image": 3 x H x W, "heatmap": 1 x H x W, "index": int};
    images are normalized for `target` ("detector" or "gan").
    """

    def __init__(
        self,
        samples: Sequence[ImageSample],
        sigma: float,
        augmentation: Optional[AugmentationConfig] = None,
        seed: int = 0,
        target=NormalizationTarget.DETECTOR,
    ):
        self.samples: List[ImageSample] = list(samples)
        self.sigma = float(sigma)
        self.augmentation = augmentation
        self.seed = int(seed)
        self.target = NormalizationTarget(target)
        self.epoch = 0
        self._landmarks = [load_landmarks(s) for s in self.samples]
        logger.debug(f"LandmarkDataset with {len(self.samples)} samples (target={self.target.value})")

    def __len__(self):
        return len(self.samples)

    def set_epoch(self, epoch: int):
        self.epoch = int(epoch)

    def landmarks(self, index: int) -> LandmarkSet:
        return self._landmarks[index]

    def __getitem__(self, index):
        sample = load_image(self.samples[index])
        landmarks = self._landmarks[index]
        if self.augmentation is not None:
            rng = np.random.default_rng(derive_seed(self.seed, "epoch", self.epoch, "item", index))
            sample, landmarks = augment_sample(sample, landmarks, self.augmentation, rng)

        heatmap = render_heatmap(landmarks, sample.width, sample.height, self.sigma)
        return {
            "image": to_chw(normalize_for(sample, self.target)),
            "heatmap": torch.from_numpy(heatmap.values.astype(np.float32))[None],
            "index": index,
        }


class UnpairedDataset(Dataset):
    """
    Unaligned pairs of one sim item and one or item.

    Length is the larger domain; the shorter domain is cycled and the or side
    is re-permuted every epoch.
    """

    def __init__(self, sim: LandmarkDataset, real: LandmarkDataset, seed: int = 0):
        if len(sim) == 0 or len(real) == 0:
            raise ConfigurationError("Unpaired training needs at least one image per domain")
        self.sim = sim
        self.real = real
        self.seed = int(seed)
        self.set_epoch(0)

    def __len__(self):
        return max(len(self.sim), len(self.real))

    def set_epoch(self, epoch: int):
        self.epoch = int(epoch)
        self.sim.set_epoch(epoch)
        self.real.set_epoch(epoch)
        rng = np.random.default_rng(derive_seed(self.seed, "pairing", self.epoch))
        self._order = rng.permutation(len(self))

    def __getitem__(self, index):
        sim_item = self.sim[index % len(self.sim)]
        or_item = self.real[int(self._order[index]) % len(self.real)]
        return {
            "sim": sim_item["image"],
            "sim_heatmap": sim_item["heatmap"],
            "or": or_item["image"],
            "or_heatmap": or_item["heatmap"],
        }
