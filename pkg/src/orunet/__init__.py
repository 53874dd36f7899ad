"""Residual-encoder U-Net for binary surgical instrument segmentation."""

from .augment import AugmentConfig, apply_augmentations
from .data import (
    DatasetRecord,
    FoldSplit,
    SynthSpec,
    load_dataset_index,
    make_folds,
    make_synthetic_dataset,
    preprocess,
    preprocess_mask,
    sample_patch,
)
from .evaluation import dice_score, percentile_cases, summarize
from .infer import (
    binarize,
    connected_components,
    ensemble_predict,
    plan_windows,
    sliding_window_predict,
)
from .losses import (
    cross_entropy_loss,
    ds_weights,
    downsample_soft_gt,
    mse_loss,
    soft_dice_loss,
    soft_dice_soft_gt,
    total_loss,
)
from .model import ModelConfig, build_model, feature_counts, forward
from .trainer import TrainConfig, load_checkpoint, poly_lr, save_checkpoint, train_fold

__version__ = "0.1.0"
