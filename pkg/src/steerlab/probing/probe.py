"""Attribute probes: fixed two-layer heads trained on frozen representations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, nn, no_grad
from ..autodiff.optim import Adam
from ..autodiff.tensor import log_softmax, relu, softmax

PROBE_SOURCES = ("raw", "hidden")
POOLING_MODES = ("masked-mean", "last-step")

PROBE_HIDDEN = 128


@dataclass
class ProbeConfig:
    source: str = "hidden"
    pooling: str = "masked-mean"
    attribute: str = "sex"
    epochs: int = 50
    lr: float = 1e-3
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.source not in PROBE_SOURCES:
            raise ValueError(f"source must be one of {PROBE_SOURCES}")
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"pooling must be one of {POOLING_MODES}")


class ProbeHead(nn.Module):
    """Two affine layers with output sizes 128 and 2, ReLU between."""

    def __init__(self, d_in: int, rng):
        super().__init__()
        self.fc1 = nn.Linear(d_in, PROBE_HIDDEN, rng)
        self.fc2 = nn.Linear(PROBE_HIDDEN, 2, rng)

    def forward(self, reps: Tensor) -> Tensor:
        return self.fc2(relu(self.fc1(reps)))


def pool_sequence(h: np.ndarray, mask: np.ndarray, pooling: str) -> np.ndarray:
    """Reduce (B, T, d) to (B, d): mean over unmasked steps, or the last one."""
    mask = np.asarray(mask, dtype=bool)
    if pooling == "masked-mean":
        w = mask.astype(np.float64)
        denom = np.maximum(w.sum(axis=1, keepdims=True), 1.0)
        return (h * w[:, :, None]).sum(axis=1) / denom
    if pooling == "last-step":
        last = mask.sum(axis=1).astype(int) - 1
        return h[np.arange(h.shape[0]), last]
    raise ValueError(f"unknown pooling {pooling!r}")


def train_probe(reps: np.ndarray, labels: np.ndarray, cfg: ProbeConfig) -> ProbeHead:
    """Fit the fixed probe head with cross-entropy; deterministic per seed."""
    reps = np.asarray(reps, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if reps.ndim != 2 or reps.shape[0] != labels.shape[0]:
        raise ValueError("reps must be (N, d) aligned with labels")
    if np.unique(labels).size < 2:
        raise ValueError("probe training requires both classes present")

    rng = np.random.default_rng([cfg.seed, 0x9B0E])
    probe = ProbeHead(reps.shape[1], rng)
    opt = Adam(list(probe.parameters()), lr=cfg.lr)
    n = reps.shape[0]
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch, 0x51E9]).permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            logits = probe(Tensor(reps[idx]))
            logp = log_softmax(logits, axis=-1)
            onehot = np.zeros((idx.size, 2))
            onehot[np.arange(idx.size), labels[idx]] = 1.0
            loss = -(logp * Tensor(onehot)).sum() * (1.0 / idx.size)
            opt.zero_grad()
            loss.backward()
            opt.step()
    probe.eval()
    return probe


def probe_scores(probe: ProbeHead, reps: np.ndarray) -> np.ndarray:
    """Positive-class probabilities for (N, d) representations."""
    with no_grad():
        logits = probe(Tensor(np.asarray(reps, dtype=np.float64)))
        return softmax(logits, axis=-1).data[:, 1]
