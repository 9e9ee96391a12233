"""Robust multimodal semantic segmentation with a blur/damage robustness benchmark."""

__version__ = "0.1.0"

from .blocks import (
    DenseBlock,
    DenseStage,
    SConvHead,
    SELayer,
    SEMixBlock,
    UpBlock,
    pixel_shuffle,
    pixel_unshuffle,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig, OptimizerConfig, TrainConfig, load_train_config
from .corruption import CorruptionSpec, DamageMask, Region, corrupt, sample_damage_mask
from .data import (
    DatasetManifest,
    MultiModalTile,
    TileRecord,
    augment_rotate,
    load_manifest,
    synth_dataset,
    tile_raster,
)
from .errors import ConfigError, NumericsError, ShapeError, ValidationError
from .losses import cross_entropy_loss
from .metrics import (
    CLASS_NAMES,
    ConfusionMatrix,
    mean_f1,
    metrics_report,
    overall_accuracy,
    per_class_f1,
)
from .network import RobustDenseNet
from .report import emit_report, load_report, render_comparison_table
from .sweep import RobustnessReport, evaluate_split, evaluate_sweep
from .training import TrainResult, train
