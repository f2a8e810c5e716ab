"""
ResNet-style generators and patch discriminators for unpaired translation.
"""
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Iterator, Tuple

import torch
import torch.nn as nn

from core.exceptions import DataValidationError, ShapeError
from core.schema import Domain

from . import config

logger = logging.getLogger(__name__)


class Direction(str, Enum):
    SIM2OR = "sim2or"
    OR2SIM = "or2sim"

    @property
    def source(self) -> Domain:
        return Domain.SIM if self is Direction.SIM2OR else Domain.OR

    @property
    def target(self) -> Domain:
        return self.source.other

    @classmethod
    def from_source(cls, domain) -> "Direction":
        return cls.SIM2OR if Domain(domain) is Domain.SIM else cls.OR2SIM


@dataclass
class GeneratorConfig:
    residual_filters: int = config.RESIDUAL_FILTERS
    residual_blocks: int = config.RESIDUAL_BLOCKS
    downsampling: int = config.DOWNSAMPLING_BLOCKS
    channels: int = 3

    def __post_init__(self):
        if self.downsampling < 0 or self.residual_blocks < 0:
            raise DataValidationError("Generator block counts must be non-negative")
        if self.residual_filters % (2 ** self.downsampling):
            raise DataValidationError(
                f"residual_filters={self.residual_filters} must be divisible by 2^{self.downsampling}"
            )

    @property
    def stem_filters(self) -> int:
        return self.residual_filters // 2 ** self.downsampling

    @property
    def stride(self) -> int:
        return 2 ** self.downsampling


@dataclass
class DiscriminatorConfig:
    base_filters: int = config.DISCRIMINATOR_FILTERS
    kernel: int = config.DISCRIMINATOR_KERNEL
    norm_layers: Tuple[int, ...] = config.DISCRIMINATOR_NORM_LAYERS
    final_activation: bool = config.DISCRIMINATOR_FINAL_ACTIVATION
    channels: int = 3

    def __post_init__(self):
        self.norm_layers = tuple(int(i) for i in self.norm_layers)
        if any(not 1 <= i <= 5 for i in self.norm_layers):
            raise DataValidationError(f"norm_layers must index layers 1..5, got {self.norm_layers}")
        if self.base_filters < 1:
            raise DataValidationError(f"base_filters must be positive, got {self.base_filters}")


@dataclass
class GanConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    init_gain: float = config.INIT_GAIN

    def __post_init__(self):
        if isinstance(self.generator, dict):
            self.generator = GeneratorConfig(**self.generator)
        if isinstance(self.discriminator, dict):
            self.discriminator = DiscriminatorConfig(**self.discriminator)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["discriminator"]["norm_layers"] = list(self.discriminator.norm_layers)
        return data


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, kernel_size=3),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, kernel_size=3),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.body(x)


class Generator(nn.Module):
    """
    7x7 stem, stride-2 downsampling, residual trunk at `residual_filters`,
    transposed-conv upsampling and a 7x7 tanh output. Output is in [-1, 1]
    and has the input's spatial size.
    """

    def __init__(self, cfg: GeneratorConfig, direction: Direction):
        super().__init__()
        self.config = cfg
        self.direction = Direction(direction)
        width = cfg.stem_filters
        edge = config.EDGE_KERNEL
        layers = [
            nn.ReflectionPad2d(edge // 2),
            nn.Conv2d(cfg.channels, width, kernel_size=edge),
            nn.InstanceNorm2d(width),
            nn.ReLU(inplace=True),
        ]
        for _ in range(cfg.downsampling):
            layers += [
                nn.Conv2d(width, width * 2, kernel_size=3, stride=2, padding=1),
                nn.InstanceNorm2d(width * 2),
                nn.ReLU(inplace=True),
            ]
            width *= 2
        layers += [ResidualBlock(width) for _ in range(cfg.residual_blocks)]
        for _ in range(cfg.downsampling):
            layers += [
                nn.ConvTranspose2d(width, width // 2, kernel_size=3, stride=2, padding=1, output_padding=1),
                nn.InstanceNorm2d(width // 2),
                nn.ReLU(inplace=True),
            ]
            width //= 2
        layers += [
            nn.ReflectionPad2d(edge // 2),
            nn.Conv2d(width, cfg.channels, kernel_size=edge),
            nn.Tanh(),
        ]
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        return self.model(x)


class Discriminator(nn.Module):
    """
    Five 4x4 convolutions: three stride-2, two stride-1. Output is a patch
    score map of size (H/8 - 2) x (W/8 - 2).
    """

    def __init__(self, cfg: DiscriminatorConfig, domain: Domain):
        super().__init__()
        self.config = cfg
        self.domain = Domain(domain)
        f = cfg.base_filters
        # (in, out, stride) per layer
        plan = [
            (cfg.channels, f, 2),
            (f, f * 2, 2),
            (f * 2, f * 4, 2),
            (f * 4, f * 8, 1),
            (f * 8, 1, 1),
        ]
        layers = []
        for index, (c_in, c_out, stride) in enumerate(plan, start=1):
            layers.append(nn.Conv2d(c_in, c_out, kernel_size=cfg.kernel, stride=stride, padding=1))
            if index in cfg.norm_layers:
                layers.append(nn.InstanceNorm2d(c_out))
            if index < len(plan) or cfg.final_activation:
                layers.append(nn.LeakyReLU(config.LEAKY_SLOPE, inplace=True))
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        return self.model(x)


def init_weights(module: nn.Module, gain: float = config.INIT_GAIN):
    """N(0, gain) convolution weights, zero biases."""
    for layer in module.modules():
        if isinstance(layer, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(layer.weight, 0.0, gain)
            if layer.bias is not None:
                nn.init.zeros_(layer.bias)


@dataclass
class GanModels:
    g_sim2or: Generator
    g_or2sim: Generator
    d_sim: Discriminator
    d_or: Discriminator

    def generators(self) -> Iterator[nn.Parameter]:
        yield from self.g_sim2or.parameters()
        yield from self.g_or2sim.parameters()

    def modules(self):
        return {
            "g_sim2or": self.g_sim2or,
            "g_or2sim": self.g_or2sim,
            "d_sim": self.d_sim,
            "d_or": self.d_or,
        }

    def generator_for(self, direction) -> Generator:
        return self.g_sim2or if Direction(direction) is Direction.SIM2OR else self.g_or2sim

    def to(self, device) -> "GanModels":
        for module in self.modules().values():
            module.to(device)
        return self

    def train(self, mode: bool = True) -> "GanModels":
        for module in self.modules().values():
            module.train(mode)
        return self


def build_gan_models(cfg: GanConfig, seed: int = 0) -> GanModels:
    """Two generators and two discriminators, initialized from `seed`."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(seed))
        models = GanModels(
            g_sim2or=Generator(cfg.generator, Direction.SIM2OR),
            g_or2sim=Generator(cfg.generator, Direction.OR2SIM),
            d_sim=Discriminator(cfg.discriminator, Domain.SIM),
            d_or=Discriminator(cfg.discriminator, Domain.OR),
        )
        for module in models.modules().values():
            init_weights(module, cfg.init_gain)
    return models


def set_requires_grad(modules, flag: bool):
    for module in modules:
        for parameter in module.parameters():
            parameter.requires_grad_(flag)


def check_gan_input(generator: Generator, batch: torch.Tensor):
    if batch.dim() != 4 or batch.shape[0] == 0:
        raise ShapeError(f"Expected a non-empty N x C x H x W batch, got shape {tuple(batch.shape)}")
    stride = generator.config.stride
    height, width = batch.shape[-2:]
    if height % stride or width % stride:
        raise ShapeError(f"Generator input {width}x{height} is not divisible by {stride}")
