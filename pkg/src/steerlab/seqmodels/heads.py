"""Task output heads and the full task model."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, nn
from ..autodiff.tensor import take
from .config import EncoderConfig
from .encoders import build_encoder

TASKS = ("ihm", "sofa")

TASK_OUT_DIM = {"ihm": 2, "sofa": 1}


class TaskHead(nn.Module):
    """Per-step affine map: d_hidden -> 2 logits (ihm) or 1 score (sofa)."""

    def __init__(self, d_hidden: int, task: str, rng):
        super().__init__()
        if task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {task!r}")
        self.task = task
        self.lin = nn.Linear(d_hidden, TASK_OUT_DIM[task], rng)

    def forward(self, h: Tensor) -> Tensor:
        return self.lin(h)


def last_step_logits(outputs: Tensor, lengths: np.ndarray) -> Tensor:
    """Reduce per-step outputs (B, T, d) to the last unmasked step's row."""
    b_sz, t_len, d = outputs.shape
    flat = outputs.reshape(b_sz * t_len, d)
    idx = np.arange(b_sz) * t_len + (np.asarray(lengths) - 1)
    return take(flat, idx)


class TaskModel(nn.Module):
    """Encoder plus task head; exposes the per-step hidden sequence."""

    def __init__(self, cfg: EncoderConfig, task: str, rng):
        super().__init__()
        self.cfg = cfg
        self.task = task
        self.encoder = build_encoder(cfg, rng)
        self.head = TaskHead(cfg.hidden_dim, task, rng)

    def forward(self, x: Tensor, mask: np.ndarray, rng=None) -> Tensor:
        return self.head(self.encoder(x, mask, rng))

    def hidden(self, x: Tensor, mask: np.ndarray) -> Tensor:
        """Frozen per-step representation at the documented extraction point."""
        return self.encoder(x, mask, None)
