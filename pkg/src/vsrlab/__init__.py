"""vsrlab: a desk-scale laboratory for spatio-temporal video super-resolution.

Library layout:
  seqcore   frame sequences, patch grids, augmentation, resampling
  degrade   nine seeded degradation operators and their pipeline
  gen       generator blocks (dense residual, RRDB, 3D non-local) and models
  disc      U-Net per-pixel discriminator
  loss      the eight loss terms plus psnr/ssim metrics
  trainer   patch-based 2x/4x cascaded training with gradient pooling
  evaluate  metric tables over clip sets
  cli       the vsrlab command-line front end
"""

__version__ = "0.1.0"

from .errors import ConfigError, ConsistencyError, ShapeError, VsrlabError
from .seqcore import (
    AugmentationSpec,
    FrameSequence,
    PatchGrid,
    augment,
    crop_fixed,
    downsample,
    is_too_dark,
    load_clip,
    reassemble,
    save_clip,
    split_into_grid,
    upsample,
)
from .degrade import (
    DegradationPlan,
    OperatorConfig,
    apply_plan,
    default_plan,
)
from .gen import (
    Generator,
    GeneratorSpec,
    NonLocalBlock3D,
    NonLocalSpec,
    RRDB,
    ResidualBlock,
    generator_forward,
    load_generator,
    save_generator,
)
from .disc import DiscriminatorSpec, UNetDiscriminator
from .loss import (
    ConvFeatureExtractor,
    FeatureExtractor,
    LossBundle,
    LossConfig,
    psnr,
    ssim,
    total_loss,
)
from .trainer import TrainConfig, TrainState, process_crop, train_epoch
from .evaluate import MetricsReport, compare_models, evaluate_clip

__all__ = [
    "__version__",
    "AugmentationSpec",
    "ConfigError",
    "ConsistencyError",
    "ConvFeatureExtractor",
    "DegradationPlan",
    "DiscriminatorSpec",
    "FeatureExtractor",
    "FrameSequence",
    "Generator",
    "GeneratorSpec",
    "LossBundle",
    "LossConfig",
    "MetricsReport",
    "NonLocalBlock3D",
    "NonLocalSpec",
    "OperatorConfig",
    "PatchGrid",
    "RRDB",
    "ResidualBlock",
    "ShapeError",
    "TrainConfig",
    "TrainState",
    "UNetDiscriminator",
    "VsrlabError",
    "apply_plan",
    "augment",
    "compare_models",
    "crop_fixed",
    "default_plan",
    "downsample",
    "evaluate_clip",
    "generator_forward",
    "is_too_dark",
    "load_clip",
    "load_generator",
    "process_crop",
    "psnr",
    "reassemble",
    "save_clip",
    "save_generator",
    "split_into_grid",
    "ssim",
    "total_loss",
    "train_epoch",
    "upsample",
]
