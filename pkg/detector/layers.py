"""
Differentiable post-processing layers: Gaussian smoothing and a local
(windowed) soft-argmax that sharpens heatmap peaks.
"""
import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from core.exceptions import DataValidationError
from core.schema import HeatmapTensor

from . import config


def gaussian_kernel(size: int = config.GAUSSIAN_KERNEL, sigma: float = config.GAUSSIAN_SIGMA) -> torch.Tensor:
    """Normalized size x size Gaussian kernel (float64)."""
    if size < 1 or size % 2 == 0:
        raise DataValidationError(f"Gaussian kernel size must be odd and positive, got {size}")
    if not sigma > 0:
        raise DataValidationError(f"Gaussian sigma must be positive, got {sigma}")
    offsets = torch.arange(size, dtype=torch.float64) - size // 2
    line = torch.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    kernel = torch.outer(line, line)
    return kernel / kernel.sum()


class GaussianFilter(nn.Module):
    """Depthwise Gaussian blur with reflect padding."""

    def __init__(self, size: int = config.GAUSSIAN_KERNEL, sigma: float = config.GAUSSIAN_SIGMA):
        super().__init__()
        self.size = size
        self.register_buffer("kernel", gaussian_kernel(size, sigma)[None, None], persistent=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        channels = x.shape[1]
        pad = self.size // 2
        weight = self.kernel.to(dtype=x.dtype, device=x.device).expand(channels, 1, self.size, self.size)
        x = F.pad(x, (pad, pad, pad, pad), mode="reflect")
        return F.conv2d(x, weight, groups=channels)


class SoftArgmax2d(nn.Module):
    """
    Local soft-argmax re-weighting.

    Each pixel keeps its value scaled by its softmax weight relative to the
    strongest weight in its window:
        out(p) = m(p) * exp((m(p) - max_window(m)(p)) / T)
    Window maxima pass through unchanged and every other pixel is damped,
    more strongly as T shrinks.
    """

    def __init__(self, window: int = config.SOFTARGMAX_WINDOW, temperature: float = config.SOFTARGMAX_TEMPERATURE):
        super().__init__()
        if window < 1 or window % 2 == 0:
            raise DataValidationError(f"Soft-argmax window must be odd and positive, got {window}")
        if not temperature > 0:
            raise DataValidationError(f"Soft-argmax temperature must be positive, got {temperature}")
        self.window = window
        self.temperature = float(temperature)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        pad = self.window // 2
        padded = F.pad(x, (pad, pad, pad, pad), mode="replicate")
        local_max = F.max_pool2d(padded, kernel_size=self.window, stride=1)
        return x * torch.exp((x - local_max) / self.temperature)


def _as_nchw(values) -> tuple:
    """Tensor in N x C x H x W plus a function restoring the caller's layout."""
    if isinstance(values, HeatmapTensor):
        tensor = torch.from_numpy(values.values.copy())[None, None]
        sigma = values.sigma
        return tensor, lambda out: HeatmapTensor(values=out[0, 0].detach().clamp(0.0, 1.0).numpy(), sigma=sigma)
    if isinstance(values, np.ndarray):
        values = torch.from_numpy(values)
    ndim = values.dim()
    if ndim == 2:
        return values[None, None], lambda out: out[0, 0]
    if ndim == 3:
        return values[None], lambda out: out[0]
    if ndim == 4:
        return values, lambda out: out
    raise DataValidationError(f"Expected an H x W, C x H x W or N x C x H x W map, got {ndim} dimensions")


def gaussian_filter(values, size: int = config.GAUSSIAN_KERNEL, sigma: float = config.GAUSSIAN_SIGMA):
    tensor, restore = _as_nchw(values)
    return restore(GaussianFilter(size, sigma)(tensor))


def soft_argmax_layer(values, window: int = config.SOFTARGMAX_WINDOW, temperature: float = config.SOFTARGMAX_TEMPERATURE):
    tensor, restore = _as_nchw(values)
    return restore(SoftArgmax2d(window, temperature)(tensor))
