"""TCN task models widened to ingest static attributes at fixed points.

Six injection points along a 4-block TCN trunk:

  I    raw static vector appended to the input channels
  II   embedded statics appended after temporal block 1
  III  embedded statics appended after temporal block 2
  IV   embedded statics appended after temporal block 3
  V    embedded statics appended after block 4, before the FC stack
  VI   embedded statics appended after the FC stack, before the task head

Points II..VI each get their own 3-layer static MLP. A fused model is built
FROM a trained (or freshly initialized) base model: every base weight is
copied, and the columns a widened layer gains for the static features start
at zero, so the fused model's predictions are bit-identical to the base
model's until training moves the new weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor, nn
from ..autodiff.tensor import concat, relu
from ..data.records import TimeSeriesRecord
from ..seqmodels.encoders import TemporalBlock
from ..seqmodels.heads import TASK_OUT_DIM, TaskModel
from .statics import STATIC_DIM, StaticScaler

FUSION_POINTS = ("I", "II", "III", "IV", "V", "VI")
REGULARIZERS = ("none", "l1", "l2")

# injection point feeding the input of trunk block i (blocks 1..3)
_BLOCK_TAP = {1: "II", 2: "III", 3: "IV"}

_DEFAULT_LAMBDA = {"l1": 1e-3, "l2": 1e-4}


@dataclass(frozen=True)
class FusionSpec:
    """Which injection points are active and how their weights are penalized."""

    points: tuple[str, ...] = ()
    regularization: str = "none"
    lam: float | None = None

    def __post_init__(self):
        bad = [p for p in self.points if p not in FUSION_POINTS]
        if bad:
            raise ValueError(f"unknown fusion points {bad}; valid: {FUSION_POINTS}")
        if len(set(self.points)) != len(self.points):
            raise ValueError(f"duplicate fusion points in {self.points}")
        if self.regularization not in REGULARIZERS:
            raise ValueError(
                f"regularization must be one of {REGULARIZERS}, got {self.regularization!r}"
            )
        # canonical order regardless of how the caller listed the points
        object.__setattr__(
            self, "points", tuple(p for p in FUSION_POINTS if p in self.points)
        )
        if self.lam is None and self.regularization != "none":
            object.__setattr__(self, "lam", _DEFAULT_LAMBDA[self.regularization])

    @property
    def label(self) -> str:
        pts = "+".join(self.points) if self.points else "none"
        if self.regularization == "none":
            return pts
        return f"{pts} ({self.regularization}, lam={self.lam:g})"


class StaticMLP(nn.Module):
    """3-layer ReLU embedding of the static vector, one per deep fusion point."""

    def __init__(self, in_dim: int, emb_dim: int, dropout: float, rng):
        super().__init__()
        self.fc1 = nn.Linear(in_dim, emb_dim, rng)
        self.fc2 = nn.Linear(emb_dim, emb_dim, rng)
        self.fc3 = nn.Linear(emb_dim, emb_dim, rng)
        self.drop = nn.Dropout(dropout)

    def forward(self, s: Tensor, rng=None) -> Tensor:
        h = self.drop(relu(self.fc1(s)), rng)
        h = self.drop(relu(self.fc2(h)), rng)
        return self.drop(relu(self.fc3(h)), rng)

    def linears(self) -> tuple[nn.Linear, ...]:
        return (self.fc1, self.fc2, self.fc3)


def _widened_block(old: TemporalBlock, extra: int, kernel: int, dilation: int,
                   dropout: float, rng) -> TemporalBlock:
    """Copy a temporal block, widening its input by `extra` zero-weight channels."""
    out_ch, in_old, _ = old.conv1.w.data.shape
    blk = TemporalBlock(in_old + extra, out_ch, kernel, dilation, dropout, rng)
    blk.conv1.w.data[:, :in_old, :] = old.conv1.w.data
    blk.conv1.w.data[:, in_old:, :] = 0.0
    blk.conv1.b.data[:] = old.conv1.b.data
    blk.conv2.w.data[:] = old.conv2.w.data
    blk.conv2.b.data[:] = old.conv2.b.data
    if extra == 0:
        if (blk.proj is None) != (old.proj is None):
            raise AssertionError("projection layout changed without widening")
        if old.proj is not None:
            blk.proj.w.data[:] = old.proj.w.data
            blk.proj.b.data[:] = old.proj.b.data
        return blk
    # widened input always mismatches out_ch, so blk.proj exists
    blk.proj.w.data[:] = 0.0
    if old.proj is not None:
        blk.proj.w.data[:, :in_old, :] = old.proj.w.data
        blk.proj.b.data[:] = old.proj.b.data
    else:
        # base block used an identity residual: extend it as [I | 0]
        blk.proj.w.data[:, :in_old, 0] = np.eye(out_ch)
        blk.proj.b.data[:] = 0.0
    return blk


def _widened_linear(old: nn.Linear, extra: int, rng) -> nn.Linear:
    lin = nn.Linear(old.in_features + extra, old.out_features, rng)
    lin.w.data[: old.in_features, :] = old.w.data
    lin.w.data[old.in_features :, :] = 0.0
    lin.b.data[:] = old.b.data
    return lin


class FusedModel(nn.Module):
    """A 4-block TCN task model with static-attribute injection points.

    Exposes the same call surface as TaskModel (forward/hidden), plus
    `uses_statics` and `static_fn` so the training loop attaches the static
    vectors to each batch.
    """

    def __init__(self, base: TaskModel, spec: FusionSpec, scaler: StaticScaler, rng):
        super().__init__()
        if base.cfg.kind != "tcn":
            raise ValueError(f"fusion requires a tcn base model, got {base.cfg.kind!r}")
        if base.cfg.tcn_blocks != 4:
            raise ValueError(
                f"fusion points are defined for a 4-block trunk, got {base.cfg.tcn_blocks}"
            )
        self.cfg = base.cfg
        self.task = base.task
        self.spec = spec
        self.scaler = scaler
        self.emb_dim = int(round(256 * base.cfg.scale))
        if self.emb_dim < 1:
            raise ValueError(f"static embedding width collapsed at scale {base.cfg.scale}")

        enc = base.encoder
        kernel, dropout = base.cfg.tcn_kernel, base.cfg.tcn_dropout
        self.blocks = nn.ModuleList()
        for i, old in enumerate(enc.blocks):
            if i == 0:
                extra = STATIC_DIM if "I" in spec.points else 0
            else:
                extra = self.emb_dim if _BLOCK_TAP[i] in spec.points else 0
            self.blocks.append(_widened_block(old, extra, kernel, 2**i, dropout, rng))
        self.fc1 = _widened_linear(
            enc.fc1, self.emb_dim if "V" in spec.points else 0, rng
        )
        self.fc2 = _widened_linear(enc.fc2, 0, rng)
        self.head = _widened_linear(
            base.head.lin, self.emb_dim if "VI" in spec.points else 0, rng
        )
        self.drop = nn.Dropout(dropout)
        for point in spec.points:
            if point == "I":
                continue  # raw vector, no embedding network
            setattr(self, f"mlp_{point}", StaticMLP(STATIC_DIM, self.emb_dim, dropout, rng))

    @property
    def uses_statics(self) -> bool:
        return bool(self.spec.points)

    def static_fn(self, record: TimeSeriesRecord) -> np.ndarray:
        return self.scaler.vector(record)

    def static_mlps(self) -> dict[str, StaticMLP]:
        return {
            p: getattr(self, f"mlp_{p}") for p in self.spec.points if p != "I"
        }

    def _embed(self, point: str, s: Tensor, rng) -> Tensor:
        return getattr(self, f"mlp_{point}")(s, rng)

    def _features(self, x: Tensor, mask: np.ndarray, rng, statics) -> Tensor:
        """Everything up to (and excluding) the task head: (B, T, d_head_in)."""
        if self.uses_statics:
            if statics is None:
                raise ValueError(
                    f"fusion points {self.spec.points} need a statics array"
                )
            s = statics if isinstance(statics, Tensor) else Tensor(np.asarray(statics, dtype=np.float64))
        b_sz, _, t_len = x.shape
        row_t = Tensor(np.ones((1, 1, t_len)))

        def tiled(v: Tensor) -> Tensor:
            # (B, e) -> (B, e, T), constant along time
            return v.reshape(b_sz, v.shape[1], 1) * row_t

        h = x
        if "I" in self.spec.points:
            h = concat([h, tiled(s)], axis=1)
        h = self.blocks[0](h, rng)
        for i in range(1, len(self.blocks)):
            tap = _BLOCK_TAP[i]
            if tap in self.spec.points:
                h = concat([h, tiled(self._embed(tap, s, rng))], axis=1)
            h = self.blocks[i](h, rng)
        if "V" in self.spec.points:
            h = concat([h, tiled(self._embed("V", s, rng))], axis=1)
        h = h.swapaxes(1, 2)  # (B, T, ch)
        h = self.drop(relu(self.fc1(h)), rng)
        h = relu(self.fc2(h))
        if "VI" in self.spec.points:
            e = self._embed("VI", s, rng)  # (B, emb)
            e_seq = e.reshape(b_sz, 1, self.emb_dim) * Tensor(np.ones((1, t_len, 1)))
            h = concat([h, e_seq], axis=2)
        return h

    def forward(self, x: Tensor, mask: np.ndarray, rng=None, statics=None) -> Tensor:
        return self.head(self._features(x, mask, rng, statics))

    def hidden(self, x: Tensor, mask: np.ndarray, statics=None) -> Tensor:
        return self._features(x, mask, None, statics)


def build_fused_model(base: TaskModel, spec: FusionSpec, scaler: StaticScaler,
                      rng) -> FusedModel:
    """Widen `base` per `spec`. The base model is left untouched."""
    return FusedModel(base, spec, scaler, rng)


def fusion_penalty(spec: FusionSpec):
    """Loss term over static-MLP weights only; None when unregularized.

    l1 adds lam * sum|w|, l2 adds lam * sum w^2. Biases and every main-branch
    parameter (trunk convs, FC stack, head, including the widened columns)
    are exempt, so the penalty can only shrink the static pathways.
    """
    if spec.regularization == "none":
        return None
    if not any(p != "I" for p in spec.points):
        raise ValueError(
            f"{spec.regularization} penalty needs at least one embedded "
            f"fusion point (II..VI); got points {spec.points}"
        )
    lam = spec.lam

    def penalty(model: FusedModel) -> Tensor:
        total = None
        for mlp in model.static_mlps().values():
            for lin in mlp.linears():
                w = lin.w
                if spec.regularization == "l1":
                    term = (relu(w) + relu(-w)).sum()
                else:
                    term = (w * w).sum()
                total = term if total is None else total + term
        return total * lam

    return penalty
