"""Causal sequence encoders, task heads, and checkpoint IO."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ENCODER_KINDS, EncoderConfig
from .encoders import (
    CausalConv1d,
    LSTMEncoder,
    TCNEncoder,
    TemporalBlock,
    TransformerEncoder,
    build_encoder,
    sinusoidal_encoding,
)
from .heads import TASKS, TaskHead, TaskModel, last_step_logits

__all__ = [
    "CausalConv1d",
    "ENCODER_KINDS",
    "EncoderConfig",
    "LSTMEncoder",
    "TASKS",
    "TCNEncoder",
    "TaskHead",
    "TaskModel",
    "TemporalBlock",
    "TransformerEncoder",
    "build_encoder",
    "last_step_logits",
    "load_checkpoint",
    "save_checkpoint",
    "sinusoidal_encoding",
]
