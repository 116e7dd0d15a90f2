"""Three causal sequence encoders over (B, m, T) inputs.

Every encoder maps a padded batch to per-step hidden vectors (B, T, d) and is
strictly causal: the output at step t depends on x_1..x_t only. Padding sits
at the tail of each record, so causality alone guarantees mask invariance at
unmasked steps.

Hidden extraction points (used by probing and fusion):
  lstm         output sequence of the last LSTM layer
  tcn          output of the final FC layer (post-ReLU), feeding the task head
  transformer  encoder-stack output
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, nn, seq_ops
from ..autodiff.tensor import concat, relu, softmax
from .config import EncoderConfig

# additive attention mask value; exp(-1e30 - max) underflows to exactly 0.0
_MASK_VALUE = -1e30


class CausalConv1d(nn.Module):
    """Dilated convolution with implicit left padding of (K-1)*dilation."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, dilation: int, rng):
        super().__init__()
        fan_in = in_ch * kernel
        fan_out = out_ch * kernel
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        self.w = nn.Parameter(rng.uniform(-bound, bound, size=(out_ch, in_ch, kernel)))
        self.b = nn.Parameter(np.zeros(out_ch))
        self.dilation = dilation

    def forward(self, x: Tensor) -> Tensor:
        return seq_ops.causal_conv1d(x, self.w, self.b, self.dilation)


class TemporalBlock(nn.Module):
    """Two dilated causal convs with ReLU/dropout and a residual connection."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, dilation: int,
                 dropout: float, rng):
        super().__init__()
        self.conv1 = CausalConv1d(in_ch, out_ch, kernel, dilation, rng)
        self.conv2 = CausalConv1d(out_ch, out_ch, kernel, dilation, rng)
        self.drop = nn.Dropout(dropout)
        self.proj = None
        if in_ch != out_ch:
            self.proj = CausalConv1d(in_ch, out_ch, 1, 1, rng)

    def forward(self, x: Tensor, rng=None) -> Tensor:
        h = self.drop(relu(self.conv1(x)), rng)
        h = self.drop(relu(self.conv2(h)), rng)
        res = x if self.proj is None else self.proj(x)
        return relu(h + res)


class TCNEncoder(nn.Module):
    """Temporal blocks with doubling dilation, then a per-step FC stack."""

    def __init__(self, cfg: EncoderConfig, rng):
        super().__init__()
        ch = cfg.scaled("tcn_channels")
        fc_dims = [int(round(f * cfg.scale)) for f in cfg.tcn_fc]
        self.blocks = nn.ModuleList()
        in_ch = cfg.in_channels
        for i in range(cfg.tcn_blocks):
            self.blocks.append(
                TemporalBlock(in_ch, ch, cfg.tcn_kernel, 2**i, cfg.tcn_dropout, rng)
            )
            in_ch = ch
        self.fc1 = nn.Linear(ch, fc_dims[0], rng)
        self.fc2 = nn.Linear(fc_dims[0], fc_dims[1], rng)
        self.drop = nn.Dropout(cfg.tcn_dropout)

    def forward(self, x: Tensor, mask: np.ndarray, rng=None) -> Tensor:
        h = x
        for block in self.blocks:
            h = block(h, rng)
        h = h.swapaxes(1, 2)  # (B, T, ch)
        h = self.drop(relu(self.fc1(h)), rng)
        return relu(self.fc2(h))


class LSTMEncoder(nn.Module):
    """Stacked LSTM; the hidden sequence of the last layer is the output."""

    def __init__(self, cfg: EncoderConfig, rng):
        super().__init__()
        hidden = cfg.scaled("lstm_hidden")
        self.layers = nn.ModuleList()
        in_dim = cfg.in_channels
        for _ in range(cfg.lstm_layers):
            self.layers.append(_LSTMLayer(in_dim, hidden, rng))
            in_dim = hidden
        self.drop = nn.Dropout(cfg.lstm_dropout)

    def forward(self, x: Tensor, mask: np.ndarray, rng=None) -> Tensor:
        h = x.swapaxes(1, 2)  # (B, T, m)
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1:
                h = self.drop(h, rng)
        return h


class _LSTMLayer(nn.Module):
    def __init__(self, in_dim: int, hidden: int, rng):
        super().__init__()
        bound = np.sqrt(6.0 / (in_dim + 4 * hidden))
        self.w_ih = nn.Parameter(rng.uniform(-bound, bound, size=(in_dim, 4 * hidden)))
        bound = np.sqrt(6.0 / (hidden + 4 * hidden))
        self.w_hh = nn.Parameter(rng.uniform(-bound, bound, size=(hidden, 4 * hidden)))
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = 1.0  # forget gate starts open
        self.bias = nn.Parameter(bias)

    def forward(self, x: Tensor) -> Tensor:
        return seq_ops.lstm_layer(x, self.w_ih, self.w_hh, self.bias)


def sinusoidal_encoding(t_len: int, d_model: int) -> np.ndarray:
    """Parameter-free additive positional table (t_len, d_model)."""
    pos = np.arange(t_len)[:, None]
    dim = np.arange(d_model)[None, :]
    angle = pos / np.power(10000.0, (2 * (dim // 2)) / d_model)
    table = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    return table


class _AttentionLayer(nn.Module):
    def __init__(self, d_model: int, heads: int, ffn: int, rng):
        super().__init__()
        self.heads = heads
        self.d_head = d_model // heads
        self.wq = nn.Linear(d_model, d_model, rng)
        self.wk = nn.Linear(d_model, d_model, rng)
        self.wv = nn.Linear(d_model, d_model, rng)
        self.wo = nn.Linear(d_model, d_model, rng)
        self.ff1 = nn.Linear(d_model, ffn, rng)
        self.ff2 = nn.Linear(ffn, d_model, rng)
        self.ln1 = nn.LayerNorm(d_model)
        self.ln2 = nn.LayerNorm(d_model)

    def forward(self, x: Tensor, causal_bias: np.ndarray) -> Tensor:
        b_sz, t_len, d_model = x.shape

        def split_heads(t: Tensor) -> Tensor:
            return t.reshape(b_sz, t_len, self.heads, self.d_head).swapaxes(1, 2)

        q = split_heads(self.wq(x))
        k = split_heads(self.wk(x))
        v = split_heads(self.wv(x))
        scores = (q @ k.swapaxes(2, 3)) * (1.0 / np.sqrt(self.d_head))
        scores = scores + Tensor(causal_bias)
        attn = softmax(scores, axis=-1)
        ctx = (attn @ v).swapaxes(1, 2).reshape(b_sz, t_len, d_model)
        h = self.ln1(x + self.wo(ctx))
        ff = self.ff2(relu(self.ff1(h)))
        return self.ln2(h + ff)


class TransformerEncoder(nn.Module):
    """Input projection + sinusoidal positions + masked self-attention stack."""

    def __init__(self, cfg: EncoderConfig, rng):
        super().__init__()
        d_model = cfg.scaled("tr_d_model")
        ffn = cfg.scaled("tr_ffn")
        self.proj = nn.Linear(cfg.in_channels, d_model, rng)
        self.layers = nn.ModuleList(
            [_AttentionLayer(d_model, cfg.tr_heads, ffn, rng) for _ in range(cfg.tr_layers)]
        )
        self.d_model = d_model

    def forward(self, x: Tensor, mask: np.ndarray, rng=None) -> Tensor:
        h = self.proj(x.swapaxes(1, 2))  # (B, T, d)
        t_len = h.shape[1]
        h = h + Tensor(sinusoidal_encoding(t_len, self.d_model))
        # strict causality: step t may attend to steps <= t only
        bias = np.triu(np.full((t_len, t_len), _MASK_VALUE), k=1)[None, None]
        for layer in self.layers:
            h = layer(h, bias)
        return h


def build_encoder(cfg: EncoderConfig, rng) -> nn.Module:
    if cfg.kind == "lstm":
        return LSTMEncoder(cfg, rng)
    if cfg.kind == "tcn":
        return TCNEncoder(cfg, rng)
    if cfg.kind == "transformer":
        return TransformerEncoder(cfg, rng)
    raise ValueError(f"unknown encoder kind {cfg.kind!r}")
