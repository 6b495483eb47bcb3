"""Numerical building blocks shared by every attack."""

from .cluster import assign_to_centroids, best_permutation_agreement, kmeans
from .metrics import PrecisionRecall, RocCurve, roc_auc, set_precision_recall
from .nn import (
    Network,
    TrainConfig,
    log_softmax,
    mean_squared_error,
    per_sample_cross_entropy,
    soft_cross_entropy,
    softmax,
    softmax_cross_entropy,
    train_network,
)
from .optim import AdamState, SGDState, adam_step, sgd_step

__all__ = [
    "AdamState",
    "Network",
    "PrecisionRecall",
    "RocCurve",
    "SGDState",
    "TrainConfig",
    "adam_step",
    "assign_to_centroids",
    "best_permutation_agreement",
    "kmeans",
    "log_softmax",
    "mean_squared_error",
    "per_sample_cross_entropy",
    "roc_auc",
    "set_precision_recall",
    "sgd_step",
    "soft_cross_entropy",
    "softmax",
    "softmax_cross_entropy",
    "train_network",
]
