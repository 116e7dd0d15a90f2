"""Static-attribute fusion for TCN task models, plus fusion studies."""

from .model import (
    FUSION_POINTS,
    FusedModel,
    FusionSpec,
    StaticMLP,
    build_fused_model,
    fusion_penalty,
)
from .statics import STATIC_DIM, StaticScaler
from .study import (
    FusionRow,
    MagnitudeRow,
    WeightMagnitudeReport,
    default_study_specs,
    fusion_study,
    regularization_analysis,
    study_to_csv,
    study_to_text,
)

__all__ = [
    "FUSION_POINTS",
    "FusedModel",
    "FusionSpec",
    "StaticMLP",
    "build_fused_model",
    "fusion_penalty",
    "STATIC_DIM",
    "StaticScaler",
    "FusionRow",
    "MagnitudeRow",
    "WeightMagnitudeReport",
    "default_study_specs",
    "fusion_study",
    "regularization_analysis",
    "study_to_csv",
    "study_to_text",
]
