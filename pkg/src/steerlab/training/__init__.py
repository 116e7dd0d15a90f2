"""Training loop and the shared metric stack."""

from .loop import (
    TrainConfig,
    TrainingDivergedError,
    evaluate_task,
    predict_ihm,
    predict_sofa,
    train_task,
)
from .metrics import MetricReport, auc, bootstrap_ci, confusion_matrix, masked_rmse

__all__ = [
    "MetricReport",
    "TrainConfig",
    "TrainingDivergedError",
    "auc",
    "bootstrap_ci",
    "confusion_matrix",
    "evaluate_task",
    "masked_rmse",
    "predict_ihm",
    "predict_sofa",
    "train_task",
]
