"""roadseg: binary road segmentation training and cross-dataset evaluation.

Prepare binary road masks from color-coded labels, train a VGG-16
encoder/decoder or a U-Net on one dataset, and evaluate on a dataset the
model has never seen, with micro-averaged pixel metrics throughout.
"""

from .config import ExperimentConfig, load_config
from .datasets import (
    BatchStream,
    DatasetManifest,
    LabeledSample,
    SplitAssignment,
    generate_synthetic,
    iterate_batches,
    load_manifest,
    load_sample,
    split,
)
from .evaluation import CrossEvalResult, cross_evaluate, error_gallery, plot_curves, tabulate
from .mask_ops import (
    ColorSpec,
    StructuringElement,
    binarize,
    dilate,
    merge_masks,
    overlay,
    repair_lane_artifacts,
)
from .metrics import ConfusionCounts, MetricsReport, confusion, report
from .models import ModelConfig, build_unet, build_vgg16_decoder, load_weights, save_weights
from .training import TrainConfig, EpochLog, adam_step, bce_logits_loss, evaluate_epoch, train

__version__ = "0.1.0"

__all__ = [
    "BatchStream",
    "ColorSpec",
    "ConfusionCounts",
    "CrossEvalResult",
    "DatasetManifest",
    "EpochLog",
    "ExperimentConfig",
    "LabeledSample",
    "MetricsReport",
    "ModelConfig",
    "SplitAssignment",
    "StructuringElement",
    "TrainConfig",
    "adam_step",
    "bce_logits_loss",
    "binarize",
    "build_unet",
    "build_vgg16_decoder",
    "confusion",
    "cross_evaluate",
    "dilate",
    "error_gallery",
    "evaluate_epoch",
    "generate_synthetic",
    "iterate_batches",
    "load_config",
    "load_manifest",
    "load_sample",
    "load_weights",
    "merge_masks",
    "overlay",
    "plot_curves",
    "repair_lane_artifacts",
    "report",
    "save_weights",
    "split",
    "tabulate",
    "train",
]
