"""Fully automatic two-stage liver and liver-tumor segmentation for CT.

Stage 1 segments the liver on downsampled axial slices; stage 2 segments
tumors at full resolution inside the localized liver. Dense fully
convolutional networks, spatially weighted losses, morphological cleanup,
and the full evaluation metric suite are included, along with a synthetic
phantom generator so the whole pipeline runs end to end without patient
data.
"""

from .cascade import CascadePrediction, localize, predict_case, predict_liver, predict_tumor
from .errors import LiverTumorSegError
from .losses import (
    LossWeights,
    dice_coefficient,
    l2_penalty,
    liver_total_loss,
    tumor_total_loss,
    weighted_cross_entropy,
)
from .metrics import (
    MetricsReport,
    dice_binary,
    dice_scores,
    evaluate_cases,
    lesion_detection,
    overlap_metrics,
    surface_distances,
    tumor_burden,
    write_metrics_csv,
)
from .network import (
    DenseFcn,
    NetworkSpec,
    build_liver_model,
    build_tumor_model,
    default_liver_spec,
    default_tumor_spec,
    load_checkpoint,
    model_from_checkpoint,
    plan_network,
    save_checkpoint,
    tiny_spec,
)
from .postprocess import (
    binary_dilate,
    binary_erode,
    largest_connected_component,
    liver_postprocess,
    mask_tumor_by_liver,
)
from .preprocess import (
    LIVER_WINDOW,
    TUMOR_WINDOWS,
    HuWindow,
    SlicePlan,
    downsample_slice,
    liver_model_input,
    plan_slices,
    stack_tumor_channels,
    target_slice,
    window_and_normalize,
)
from .training import (
    BatchSampler,
    EpochReport,
    TrainConfig,
    build_case_plans,
    iter_epoch_batches,
    parse_config_file,
    run_epoch,
    sample_batch,
    train_model,
)
from .volumes import (
    LIVER,
    TUMOR,
    CtVolume,
    DatasetSplit,
    LabelVolume,
    generate_phantom,
    load_labels,
    load_split,
    load_volume,
    save_labels,
    save_split,
    save_volume,
)
from .weightmap import WeightMap, liver_boundary_weights, tumor_class_weights

__version__ = "0.1.0"

__all__ = [
    "CascadePrediction",
    "CtVolume",
    "DatasetSplit",
    "DenseFcn",
    "EpochReport",
    "HuWindow",
    "LabelVolume",
    "LiverTumorSegError",
    "LIVER",
    "LIVER_WINDOW",
    "LossWeights",
    "MetricsReport",
    "NetworkSpec",
    "SlicePlan",
    "TrainConfig",
    "TUMOR",
    "TUMOR_WINDOWS",
    "WeightMap",
    "BatchSampler",
    "binary_dilate",
    "binary_erode",
    "build_case_plans",
    "build_liver_model",
    "build_tumor_model",
    "default_liver_spec",
    "default_tumor_spec",
    "dice_binary",
    "dice_coefficient",
    "dice_scores",
    "downsample_slice",
    "evaluate_cases",
    "generate_phantom",
    "iter_epoch_batches",
    "l2_penalty",
    "largest_connected_component",
    "lesion_detection",
    "liver_boundary_weights",
    "liver_model_input",
    "liver_postprocess",
    "liver_total_loss",
    "load_checkpoint",
    "load_labels",
    "load_split",
    "load_volume",
    "localize",
    "mask_tumor_by_liver",
    "model_from_checkpoint",
    "overlap_metrics",
    "parse_config_file",
    "plan_network",
    "plan_slices",
    "predict_case",
    "predict_liver",
    "predict_tumor",
    "run_epoch",
    "sample_batch",
    "save_checkpoint",
    "save_labels",
    "save_split",
    "save_volume",
    "stack_tumor_channels",
    "surface_distances",
    "target_slice",
    "tiny_spec",
    "train_model",
    "tumor_burden",
    "tumor_class_weights",
    "tumor_total_loss",
    "weighted_cross_entropy",
    "window_and_normalize",
    "write_metrics_csv",
]
