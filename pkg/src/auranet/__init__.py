"""Attention U-net with a pretrained residual encoder and a composite
active-contour/BCE/Dice loss, for segmenting small phase-contrast
microscopy datasets."""

from .data import AugmentationConfig, DatasetSpec, Sample
from .losses import LossConfig, combined_loss
from .metrics import DatasetReport, MetricsReport, evaluate_dataset
from .model import ModelConfig, SegmentationNet, build, variant_label
from .training import TrainConfig, ablate, line_search, train

__version__ = "0.1.0"

__all__ = [
    "AugmentationConfig",
    "DatasetSpec",
    "Sample",
    "LossConfig",
    "combined_loss",
    "DatasetReport",
    "MetricsReport",
    "evaluate_dataset",
    "ModelConfig",
    "SegmentationNet",
    "build",
    "variant_label",
    "TrainConfig",
    "ablate",
    "line_search",
    "train",
    "__version__",
]
