"""
Point-segmentation loss: pixel MSE plus soft-Dice, applied to the sigmoid
map and to the refined map.
"""
import torch
import torch.nn.functional as F

from core.exceptions import DataValidationError, ShapeError

from . import config
from .network import MseReduction


def _batched(tensor: torch.Tensor) -> torch.Tensor:
    if tensor.dim() == 2:
        return tensor[None, None]
    if tensor.dim() == 3:
        return tensor[None]
    return tensor


def soft_dice(prediction: torch.Tensor, target: torch.Tensor, smoothing: float = config.DICE_SMOOTHING) -> torch.Tensor:
    """Per-sample soft-Dice (2 sum(y * y_hat) + s) / (sum(y) + sum(y_hat) + s)."""
    prediction, target = _batched(prediction), _batched(target)
    dims = tuple(range(1, prediction.dim()))
    overlap = (prediction * target).sum(dim=dims)
    total = prediction.sum(dim=dims) + target.sum(dim=dims)
    return (2.0 * overlap + smoothing) / (total + smoothing)


def stage_loss(prediction, target, smoothing=config.DICE_SMOOTHING, reduction=MseReduction.MEAN) -> torch.Tensor:
    reduction = MseReduction(reduction)
    mse = F.mse_loss(prediction, target, reduction=reduction.value)
    return mse + (1.0 - soft_dice(prediction, target, smoothing)).mean()


def detection_loss(
    sigmoid_map: torch.Tensor,
    refined_map: torch.Tensor,
    target: torch.Tensor,
    smoothing: float = config.DICE_SMOOTHING,
    reduction=MseReduction.MEAN,
) -> torch.Tensor:
    """
    Sum of the per-stage losses on the sigmoid and refined maps.

    Raises:
        ShapeError: maps and target differ in shape
        DataValidationError: non-positive smoothing
    """
    if not smoothing > 0:
        raise DataValidationError(f"Dice smoothing must be positive, got {smoothing}")
    if sigmoid_map.shape != target.shape or refined_map.shape != target.shape:
        raise ShapeError(
            f"Loss inputs disagree: sigmoid {tuple(sigmoid_map.shape)}, "
            f"refined {tuple(refined_map.shape)}, target {tuple(target.shape)}"
        )
    return (
        stage_loss(sigmoid_map, target, smoothing, reduction)
        + stage_loss(refined_map, target, smoothing, reduction)
    )
