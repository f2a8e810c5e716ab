"""
Encoder-decoder landmark detector with a differentiable Gaussian and
soft-argmax head.
"""
import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Tuple

import numpy as np
import torch
import torch.nn as nn

from core.exceptions import DataValidationError, ShapeError
from core.schema import HeatmapTensor

from . import config
from .layers import GaussianFilter, SoftArgmax2d

logger = logging.getLogger(__name__)


class MseReduction(str, Enum):
    MEAN = "mean"
    SUM = "sum"


@dataclass
class DetectorConfig:
    depth: int = config.DEPTH
    base_channels: int = config.BASE_CHANNELS
    in_channels: int = 3
    dropout: Tuple[float, ...] = config.DROPOUT_SCHEDULE
    upsampling: str = config.UPSAMPLING
    gaussian_kernel: int = config.GAUSSIAN_KERNEL
    gaussian_sigma: float = config.GAUSSIAN_SIGMA
    softargmax_window: int = config.SOFTARGMAX_WINDOW
    temperature: float = config.SOFTARGMAX_TEMPERATURE
    smoothing: float = config.DICE_SMOOTHING
    heatmap_sigma: float = config.HEATMAP_SIGMA
    mse_reduction: MseReduction = MseReduction(config.MSE_REDUCTION)

    def __post_init__(self):
        self.dropout = tuple(float(p) for p in self.dropout)
        self.mse_reduction = MseReduction(self.mse_reduction)
        if self.depth < 1:
            raise DataValidationError(f"depth must be at least 1, got {self.depth}")
        if self.base_channels < 1:
            raise DataValidationError(f"base_channels must be positive, got {self.base_channels}")
        if len(self.dropout) != self.depth + 1:
            raise DataValidationError(
                f"dropout schedule needs {self.depth + 1} values (one per level plus bottleneck), got {len(self.dropout)}"
            )
        if any(not 0.0 <= p <= 1.0 for p in self.dropout):
            raise DataValidationError(f"dropout values must lie in [0, 1], got {self.dropout}")
        for name in ("gaussian_kernel", "softargmax_window"):
            value = getattr(self, name)
            if value < 1 or value % 2 == 0:
                raise DataValidationError(f"{name} must be odd and positive, got {value}")
        if self.upsampling not in ("bilinear", "nearest"):
            raise DataValidationError(f"upsampling must be 'bilinear' or 'nearest', got {self.upsampling!r}")
        for name in ("gaussian_sigma", "temperature", "smoothing", "heatmap_sigma"):
            if not getattr(self, name) > 0:
                raise DataValidationError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def stride(self) -> int:
        return 2 ** self.depth

    def to_dict(self) -> dict:
        data = asdict(self)
        data["dropout"] = list(self.dropout)
        data["mse_reduction"] = self.mse_reduction.value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "DetectorConfig":
        return cls(**data)


class ConvBlock(nn.Module):
    """Two (conv 3x3 -> ReLU -> batch norm) stages followed by dropout."""

    def __init__(self, in_channels: int, out_channels: int, dropout: float):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1),
            nn.ReLU(inplace=True),
            nn.BatchNorm2d(out_channels),
            nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1),
            nn.ReLU(inplace=True),
            nn.BatchNorm2d(out_channels),
            nn.Dropout2d(dropout),
        )

    def forward(self, x):
        return self.body(x)


class DetectorModel(nn.Module):
    """
    U-Net style detector.

    forward() returns (sigmoid_map, refined_map), both N x 1 x H x W in [0, 1];
    refined_map = soft-argmax(gaussian(sigmoid_map)).
    """

    def __init__(self, cfg: DetectorConfig):
        super().__init__()
        self.trainable = True
        self.config = cfg
        widths = [cfg.base_channels * 2 ** level for level in range(cfg.depth + 1)]

        self.encoders = nn.ModuleList()
        in_channels = cfg.in_channels
        for level in range(cfg.depth):
            self.encoders.append(ConvBlock(in_channels, widths[level], cfg.dropout[level]))
            in_channels = widths[level]
        self.pool = nn.MaxPool2d(2)
        self.bottleneck = ConvBlock(widths[cfg.depth - 1], widths[cfg.depth], cfg.dropout[cfg.depth])

        align = {"align_corners": False} if cfg.upsampling == "bilinear" else {}
        self.upsample = nn.Upsample(scale_factor=2, mode=cfg.upsampling, **align)
        self.decoders = nn.ModuleList()
        for level in reversed(range(cfg.depth)):
            self.decoders.append(ConvBlock(widths[level + 1] + widths[level], widths[level], cfg.dropout[level]))

        self.head = nn.Conv2d(widths[0], 1, kernel_size=1)
        self.gaussian = GaussianFilter(cfg.gaussian_kernel, cfg.gaussian_sigma)
        self.soft_argmax = SoftArgmax2d(cfg.softargmax_window, cfg.temperature)

    def forward(self, x: torch.Tensor):
        skips = []
        for encoder in self.encoders:
            x = encoder(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for decoder, skip in zip(self.decoders, reversed(skips)):
            x = decoder(torch.cat([self.upsample(x), skip], dim=1))

        sigmoid_map = torch.sigmoid(self.head(x))
        refined_map = self.soft_argmax(self.gaussian(sigmoid_map))
        return sigmoid_map, refined_map

    def freeze(self) -> "DetectorModel":
        """Fix all parameters and batch-norm statistics."""
        for parameter in self.parameters():
            parameter.requires_grad_(False)
        self.trainable = False
        return super().train(False)

    def train(self, mode: bool = True):
        # frozen detectors stay in eval mode even inside a training model
        return super().train(mode and self.trainable)


def build_detector(cfg: DetectorConfig, seed: int = 0) -> DetectorModel:
    """Freshly initialized detector; equal seeds give identical parameters."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(seed))
        model = DetectorModel(cfg)
    logger.debug(f"Built detector with {count_parameters(model)} parameters (seed={seed})")
    return model


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def check_input_shape(model: DetectorModel, image: torch.Tensor):
    if image.dim() != 4:
        raise ShapeError(f"Detector input must be N x C x H x W, got shape {tuple(image.shape)}")
    height, width = image.shape[-2:]
    stride = model.config.stride
    if height % stride or width % stride:
        raise ShapeError(f"Detector input {width}x{height} is not divisible by {stride}")
    if image.shape[1] != model.config.in_channels:
        raise ShapeError(f"Detector expects {model.config.in_channels} channels, got {image.shape[1]}")


def detector_forward(model: DetectorModel, image: torch.Tensor):
    """Shape-checked forward pass; returns (sigmoid_map, refined_map) tensors."""
    check_input_shape(model, image)
    return model(image)


def to_heatmaps(maps: torch.Tensor, sigma: float = config.HEATMAP_SIGMA):
    """Split an N x 1 x H x W batch into HeatmapTensors."""
    values = maps.detach().to("cpu", torch.float64).clamp(0.0, 1.0).numpy()
    return [HeatmapTensor(values=np.ascontiguousarray(v[0]), sigma=sigma) for v in values]
