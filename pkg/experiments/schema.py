"""
Typed experiment descriptor.

A descriptor is a nested key/value tree (YAML on disk) that maps onto the
dataclasses below. Every section is optional and falls back to the
defaults of the module that owns it.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

from core.exceptions import ConfigurationError
from core.schema import Domain
from detcyclegan import config as detcyclegan_config
from detcyclegan.losses import DetLossWeights
from detector import config as detector_config
from detector.network import DetectorConfig
from engine.schema import DetectorTrainingConfig, GanTrainingConfig
from evaluation import config as evaluation_config
from synthgen import config as synthgen_config
from translation.losses import GanLossWeights
from translation.networks import GanConfig

from . import config


class EvalTarget(str, Enum):
    REAL = "real"  # per-fold detector on its real validation fold
    TRANSLATED = "translated"  # frozen or-detector on each fold's fake images
    HELD_OUT = "held_out"  # per-fold detector trained on real images only, on the held-out test set
    FUSED = "fused"  # fusion-retrained detector on the held-out test set
    ANNOTATIONS = "annotations"  # landmark annotation files against ground truth
    MASKS = "masks"  # suture polylines of annotation files against ground truth


@dataclass
class ExperimentSection:
    id: str = "experiment"
    root: str = "runs"
    seed: int = 0
    folds: Optional[List[int]] = None
    device: Optional[str] = None
    resume: bool = False

    def __post_init__(self):
        if self.folds is not None:
            self.folds = [int(f) for f in self.folds]
            if any(f < 0 for f in self.folds):
                raise ConfigurationError(f"experiment.folds must be non-negative, got {self.folds}")


@dataclass
class DataSection:
    manifest: str = config.DEFAULT_MANIFEST
    test_manifest: Optional[str] = None
    domains: Tuple[str, ...] = config.DEFAULT_DOMAINS
    width: int = synthgen_config.SCENE_WIDTH
    height: int = synthgen_config.SCENE_HEIGHT
    sigma: float = detector_config.HEATMAP_SIGMA

    def __post_init__(self):
        self.domains = tuple(Domain(d).value for d in self.domains)
        if self.width < 1 or self.height < 1:
            raise ConfigurationError(f"data resolution must be positive, got {self.width}x{self.height}")
        if not self.sigma > 0:
            raise ConfigurationError(f"data.sigma must be positive, got {self.sigma}")


@dataclass
class SynthSection:
    n_images: int = config.SYNTH_IMAGES
    n_groups: int = config.SYNTH_GROUPS
    k: Optional[int] = None
    n_test: int = 0
    n_sutures: Tuple[int, int] = synthgen_config.N_SUTURES

    def __post_init__(self):
        self.n_sutures = tuple(int(n) for n in self.n_sutures)
        if self.n_test < 0:
            raise ConfigurationError(f"synth.n_test must be non-negative, got {self.n_test}")


@dataclass
class DetWeightsSection:
    """Either a named weight-grid row or explicit weights."""
    grid: Optional[str] = None
    alpha_fake: float = 0.0
    alpha_recovered: float = 0.0
    cross_domain_weight: float = detcyclegan_config.CROSS_DOMAIN_WEIGHT
    semantic_weight: float = detcyclegan_config.SEMANTIC_WEIGHT

    def __post_init__(self):
        if self.grid is not None and self.grid not in detcyclegan_config.WEIGHT_GRID:
            raise ConfigurationError(
                f"det_weights.grid must be one of {sorted(detcyclegan_config.WEIGHT_GRID)}, got {self.grid!r}"
            )
        self.build()

    def build(self) -> DetLossWeights:
        ablations = dict(cross_domain_weight=self.cross_domain_weight, semantic_weight=self.semantic_weight)
        if self.grid is not None:
            return DetLossWeights.from_grid(self.grid, **ablations)
        return DetLossWeights(
            self.alpha_fake, self.alpha_recovered,
            DetLossWeights.variant_for(self.alpha_fake, self.alpha_recovered), **ablations,
        )


@dataclass
class TrainSection:
    detector: DetectorTrainingConfig = field(default_factory=DetectorTrainingConfig)
    gan: GanTrainingConfig = field(default_factory=GanTrainingConfig)


@dataclass
class EvalSection:
    target: EvalTarget = EvalTarget.REAL
    domain: str = Domain.OR.value
    name: Optional[str] = None
    radius: float = evaluation_config.MATCH_RADIUS
    threshold: float = evaluation_config.HEATMAP_THRESHOLD
    predictions: Optional[str] = None
    overlays: bool = False
    batch_size: int = 8

    def __post_init__(self):
        self.target = EvalTarget(self.target)
        self.domain = Domain(self.domain).value
        if not self.radius > 0:
            raise ConfigurationError(f"eval.radius must be positive, got {self.radius}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigurationError(f"eval.threshold must lie in (0, 1), got {self.threshold}")
        if self.target in (EvalTarget.ANNOTATIONS, EvalTarget.MASKS) and not self.predictions:
            raise ConfigurationError(f"eval.predictions is required for target {self.target.value}")


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    data: DataSection = field(default_factory=DataSection)
    synth: SynthSection = field(default_factory=SynthSection)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    gan: GanConfig = field(default_factory=GanConfig)
    gan_weights: GanLossWeights = field(default_factory=GanLossWeights)
    det_weights: DetWeightsSection = field(default_factory=DetWeightsSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def __post_init__(self):
        # one seed, one device and one heatmap width for every stage
        self.detector.heatmap_sigma = self.data.sigma
        self.train.gan.heatmap_sigma = self.data.sigma
        for stage in (self.train.detector, self.train.gan):
            stage.seed = self.experiment.seed
            if self.experiment.device:
                stage.device = self.experiment.device

    @property
    def seed(self) -> int:
        return self.experiment.seed

    @property
    def device(self) -> str:
        return self.train.detector.device
