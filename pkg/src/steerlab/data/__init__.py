"""Synthetic cohorts, dataset files, task labels, and batching."""

from .batching import make_batches, partition_hash, split
from .io import DatasetFormatError, load_dataset, save_dataset
from .records import (
    COMORBIDITY_KEYS,
    Batch,
    StaticLabels,
    TimeSeriesRecord,
)
from .synthetic import LEAK_ATTRIBUTES, SynthConfig, generate_cohort
from .tasks import (
    IHM_GAP_H,
    IHM_WINDOW_H,
    SOFA_HORIZON_H,
    StaticLabelTable,
    binarize_statics,
    filter_cohort,
    make_ihm_labels,
    make_sofa_targets,
)

__all__ = [
    "Batch",
    "COMORBIDITY_KEYS",
    "DatasetFormatError",
    "IHM_GAP_H",
    "IHM_WINDOW_H",
    "LEAK_ATTRIBUTES",
    "SOFA_HORIZON_H",
    "StaticLabelTable",
    "StaticLabels",
    "SynthConfig",
    "TimeSeriesRecord",
    "binarize_statics",
    "filter_cohort",
    "generate_cohort",
    "load_dataset",
    "make_batches",
    "make_ihm_labels",
    "make_sofa_targets",
    "partition_hash",
    "save_dataset",
    "split",
]
