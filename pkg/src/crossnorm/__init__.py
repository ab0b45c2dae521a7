"""Cross-modal face-normal estimation with deactivable skip connections."""

from ._kernels import backend_name, get_num_threads, set_num_threads
from .data import (
    LightSpec,
    Sample,
    SampleKind,
    crop_from_keypoints,
    gen_sample,
    generate_dataset,
    load_dataset,
    render_lambertian,
)
from .evaluate import Report, ShadingSpec, enhance_depth, evaluate_dataset, shade_with_normals
from .gradcheck import GradCheckReport, gradient_check, standard_suite
from .losses import (
    AngularErrorStats,
    angular_error_stats,
    cosine_loss,
    format_error_row,
    l2_loss,
)
from .model import (
    CrossModalModel,
    ForwardMode,
    ModelConfig,
    SkipState,
    fuse,
)
from .pfm import read_pfm, write_pfm
from .tensor import (
    Tensor,
    add,
    concat_channels,
    conv2d,
    elementwise_max,
    group_norm,
    mul,
    relu,
    sigmoid,
    slice_channels,
    sum_all,
    upsample_nearest,
)
from .trainer import Adam, TrainConfig, train, train_iteration

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AngularErrorStats",
    "CrossModalModel",
    "ForwardMode",
    "GradCheckReport",
    "LightSpec",
    "ModelConfig",
    "Report",
    "Sample",
    "SampleKind",
    "ShadingSpec",
    "SkipState",
    "Tensor",
    "TrainConfig",
    "add",
    "angular_error_stats",
    "backend_name",
    "concat_channels",
    "conv2d",
    "cosine_loss",
    "crop_from_keypoints",
    "elementwise_max",
    "enhance_depth",
    "evaluate_dataset",
    "format_error_row",
    "fuse",
    "gen_sample",
    "generate_dataset",
    "get_num_threads",
    "gradient_check",
    "group_norm",
    "l2_loss",
    "load_dataset",
    "mul",
    "read_pfm",
    "relu",
    "render_lambertian",
    "set_num_threads",
    "shade_with_normals",
    "sigmoid",
    "slice_channels",
    "standard_suite",
    "sum_all",
    "train",
    "train_iteration",
    "upsample_nearest",
    "write_pfm",
]
