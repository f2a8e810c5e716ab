"""
Batched inference over image samples.
"""
import logging
from typing import List, Sequence

import torch

from core.datasets import to_chw
from core.exceptions import DataValidationError
from core.imaging import load_image
from core.normalization import normalize_for
from core.schema import HeatmapTensor, ImageSample

from .network import DetectorModel, detector_forward, to_heatmaps

logger = logging.getLogger(__name__)

MAP_KINDS = ("refined", "sigmoid")


@torch.no_grad()
def predict_heatmaps(
    model: DetectorModel,
    samples: Sequence[ImageSample],
    batch_size: int = 8,
    device="cpu",
    map_kind: str = "refined",
) -> List[HeatmapTensor]:
    """Run the detector in eval mode; one heatmap per sample, in order."""
    if map_kind not in MAP_KINDS:
        raise DataValidationError(f"map_kind must be one of {MAP_KINDS}, got {map_kind!r}")
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    heatmaps: List[HeatmapTensor] = []
    try:
        for start in range(0, len(samples), batch_size):
            chunk = [load_image(s) for s in samples[start:start + batch_size]]
            batch = torch.stack([to_chw(normalize_for(s, "detector")) for s in chunk]).to(device=device, dtype=dtype)
            sigmoid_map, refined_map = detector_forward(model, batch)
            chosen = refined_map if map_kind == "refined" else sigmoid_map
            heatmaps.extend(to_heatmaps(chosen, model.config.heatmap_sigma))
    finally:
        model.train(was_training)
    logger.debug(f"Predicted {len(heatmaps)} heatmaps ({map_kind})")
    return heatmaps
