"""Desk-scale sound event detection lab.

Synthetic multi-label scenes, a miniature trainable sequence model with
exact hand-written gradients, semi-supervised training (teacher
consistency, interpolation consistency, self- and cross-referenced
pseudo-label training), extreme-value classwise post-processing, and
collar-based event evaluation, all runnable end to end from the
``sedlab`` CLI or through scikit-learn style estimators.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    FormatError,
    InvalidInputError,
    NumericError,
    SedLabError,
    TrainingDivergenceError,
)
from .features import FeatureGrid, PreprocConfig, log_mel
from .scenes import SceneConfig, StrongLabelGrid, WeakLabel, synth_scene, weaken
from .perturb import add_noise_snr, frame_shift, mixup
from .datasets import Dataset, DatasetSpec, build_dataset, load_dataset, save_dataset
from .network import ConvRecurrentNet, ModelConfig, PosteriorGrid, clip_pool
from .optim import OptState, adam_step, ema_update
from .pseudolabel import (
    PseudoLabelGrid,
    dp_pseudo_label,
    enumerate_pseudo_label,
    label_count,
    pseudo_label_grid,
)
from .reliability import RampSchedule, jsd, ramp_weight, reliability_strong, reliability_weak
from .losses import (
    BatchLayout,
    LossBreakdown,
    bce,
    loss_crst,
    loss_ict,
    loss_mt,
    loss_srst,
    loss_supervised,
    mse,
)
from .nelder_mead import nelder_mead
from .evt import EvtFit, em_two_cluster, evt_threshold, fit_gpd, tail_threshold
from .events import EventInterval, extract_intervals, rasterize_intervals
from .postprocess import (
    ClasswisePostprocParams,
    classwise_postproc,
    estimate_filter_len,
    fit_classwise_params,
    global_postproc,
    median_smooth,
)
from .evaluation import (
    MatchResult,
    ScoreReport,
    concurrency_stats,
    confusion_matrix,
    match_events,
    score,
    welch_t,
)
from .training import TrainConfig, load_checkpoint, save_checkpoint, train
from .estimators import ClasswiseEventPostProcessor, SoundEventDetector

__all__ = [
    "__version__",
    "SedLabError", "InvalidInputError", "ConfigError", "DataError", "FormatError",
    "NumericError", "TrainingDivergenceError",
    "PreprocConfig", "FeatureGrid", "log_mel",
    "SceneConfig", "StrongLabelGrid", "WeakLabel", "synth_scene", "weaken",
    "add_noise_snr", "frame_shift", "mixup",
    "Dataset", "DatasetSpec", "build_dataset", "save_dataset", "load_dataset",
    "ModelConfig", "ConvRecurrentNet", "PosteriorGrid", "clip_pool",
    "OptState", "adam_step", "ema_update",
    "PseudoLabelGrid", "label_count", "enumerate_pseudo_label", "dp_pseudo_label",
    "pseudo_label_grid",
    "RampSchedule", "ramp_weight", "jsd", "reliability_strong", "reliability_weak",
    "BatchLayout", "LossBreakdown", "bce", "mse",
    "loss_supervised", "loss_mt", "loss_ict", "loss_srst", "loss_crst",
    "nelder_mead",
    "EvtFit", "em_two_cluster", "fit_gpd", "tail_threshold", "evt_threshold",
    "EventInterval", "extract_intervals", "rasterize_intervals",
    "ClasswisePostprocParams", "median_smooth", "estimate_filter_len",
    "global_postproc", "classwise_postproc", "fit_classwise_params",
    "MatchResult", "ScoreReport", "match_events", "score", "confusion_matrix",
    "concurrency_stats", "welch_t",
    "TrainConfig", "train", "save_checkpoint", "load_checkpoint",
    "SoundEventDetector", "ClasswiseEventPostProcessor",
]
