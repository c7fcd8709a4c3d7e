"""Transition-aware multi-activity knowledge tracing."""

from takt._core import (
    Dataset,
    Hyperparams,
    ModelParams,
    SyntheticConfig,
    __version__,
    auc,
    compare_transfer_matrices,
    cross_validate,
    evaluate,
    generate_synthetic,
    knowledge_state_trajectory,
    load_checkpoint,
    load_interactions,
    paired_t_test,
    rmse,
    save_checkpoint,
    spearman,
    stratified_folds,
    train,
    wilcoxon_signed_rank,
    zscore_normalize,
)

__all__ = [
    "Dataset",
    "Hyperparams",
    "ModelParams",
    "SyntheticConfig",
    "__version__",
    "auc",
    "compare_transfer_matrices",
    "cross_validate",
    "evaluate",
    "generate_synthetic",
    "knowledge_state_trajectory",
    "load_checkpoint",
    "load_interactions",
    "paired_t_test",
    "rmse",
    "save_checkpoint",
    "spearman",
    "stratified_folds",
    "train",
    "wilcoxon_signed_rank",
    "zscore_normalize",
]
