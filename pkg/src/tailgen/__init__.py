"""tailgen: two-stage oversampling for imbalanced regression.

Stage 1 synthesizes joint (feature, target) rows around rare targets by
neighbour interpolation and Gaussian jitter; Stage 2 refines that pool with
an adversarially trained generator whose loss couples a critic score with a
kernel two-sample term against the real rare rows. The harness reproduces
the evaluation protocol: repeated splits, relevance-weighted metrics, and
Wilcoxon-tested win counts across pipeline modes.
"""

from .data import (
    Dataset,
    RngStream,
    Scaler,
    apply_scaler,
    fit_scaler,
    invert_scaler,
    load_csv,
    train_test_split,
)
from .errors import (
    DataError,
    DivergedTraining,
    TailgenError,
)
from .gan import (
    GanConfig,
    TrainHistory,
    gradient_penalty,
    median_bandwidth,
    mmd2_unbiased,
    noise_pool,
    refine,
    train,
)
from .harness import (
    ComparisonSummary,
    ExperimentConfig,
    SplitResult,
    knn_fit_predict,
    run_benchmark,
    run_split,
    wilcoxon_signed_rank,
)
from .metrics import (
    DiagnosticReport,
    UtilityParams,
    correlation_frobenius_gap,
    moment_gaps,
    pca_project,
    precision_recall_f1,
    rmse,
    sera,
    utility,
)
from .nn import AdamState, Mlp, adam_init, adam_step, forward, init_mlp, input_gradient
from .pipeline import AugmentResult, augment, synthetic_tail_dataset
from .relevance import RelevanceFn, fit_relevance, partition_rare, phi
from .smogn import SmognParams, SyntheticPool, knn_rare, oversample, synthesize_from_seed

__version__ = "0.1.0"
CONFIG_SCHEMA_VERSION = 1

__all__ = [
    "AdamState",
    "AugmentResult",
    "ComparisonSummary",
    "DataError",
    "Dataset",
    "DiagnosticReport",
    "DivergedTraining",
    "ExperimentConfig",
    "GanConfig",
    "Mlp",
    "RelevanceFn",
    "RngStream",
    "Scaler",
    "SmognParams",
    "SplitResult",
    "SyntheticPool",
    "TailgenError",
    "TrainHistory",
    "UtilityParams",
    "adam_init",
    "adam_step",
    "apply_scaler",
    "augment",
    "correlation_frobenius_gap",
    "fit_relevance",
    "fit_scaler",
    "forward",
    "gradient_penalty",
    "init_mlp",
    "input_gradient",
    "invert_scaler",
    "knn_fit_predict",
    "knn_rare",
    "load_csv",
    "median_bandwidth",
    "mmd2_unbiased",
    "moment_gaps",
    "noise_pool",
    "oversample",
    "partition_rare",
    "pca_project",
    "phi",
    "precision_recall_f1",
    "refine",
    "rmse",
    "run_benchmark",
    "run_split",
    "sera",
    "synthesize_from_seed",
    "synthetic_tail_dataset",
    "train",
    "train_test_split",
    "utility",
    "wilcoxon_signed_rank",
]
