"""Static-attribute leakage probing on raw series and frozen hidden states."""

from .audit import (
    LeakageReport,
    TrainedProbe,
    cross_dataset_eval,
    extract_hidden,
    leakage_audit,
    raw_features,
)
from .probe import (
    POOLING_MODES,
    PROBE_SOURCES,
    ProbeConfig,
    ProbeHead,
    pool_sequence,
    probe_scores,
    train_probe,
)

__all__ = [
    "LeakageReport",
    "POOLING_MODES",
    "PROBE_SOURCES",
    "ProbeConfig",
    "ProbeHead",
    "TrainedProbe",
    "cross_dataset_eval",
    "extract_hidden",
    "leakage_audit",
    "pool_sequence",
    "probe_scores",
    "raw_features",
    "train_probe",
]
