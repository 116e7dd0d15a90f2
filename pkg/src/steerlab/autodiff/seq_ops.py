"""Sequence-level autodiff ops backed by the kernel layer.

Both ops are strictly causal: output at step t is a function of inputs at
steps <= t only. Batch layout is (batch, channels, T) for the convolution
and (batch, T, features) for the LSTM.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .tensor import Tensor, _make


def causal_conv1d(x: Tensor, w: Tensor, b: Tensor | None, dilation: int) -> Tensor:
    """Dilated causal convolution; x (B, Cin, T), w (Cout, Cin, K), b (Cout,)."""
    data = kernels.causal_conv1d_forward(x.data, w.data, dilation)
    if b is not None:
        data = data + b.data[:, None]
    ksize = w.data.shape[2]

    def backward(g):
        if x.requires_grad:
            x._accumulate(kernels.causal_conv1d_dx(g, w.data, dilation))
        if w.requires_grad:
            w._accumulate(kernels.causal_conv1d_dw(g, x.data, ksize, dilation))
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2)))

    parents = (x, w) if b is None else (x, w, b)
    return _make(data, parents, backward)


def lstm_layer(x: Tensor, w_ih: Tensor, w_hh: Tensor, bias: Tensor) -> Tensor:
    """One LSTM layer over a full sequence; x (B, T, I) -> h (B, T, H).

    Gate preactivations are x_t @ w_ih + h_{t-1} @ w_hh + bias with layout
    [i|f|g|o]; h_0 = c_0 = 0. The input-side matmul is hoisted out of the
    time loop; the recurrent matmul and the fused gate pointwise run per
    step.
    """
    batch, t_len, _ = x.data.shape
    hsz = w_hh.data.shape[0]
    xw = x.data.reshape(batch * t_len, -1) @ w_ih.data + bias.data
    xw = xw.reshape(batch, t_len, 4 * hsz)

    h_seq = np.empty((batch, t_len, hsz))
    c_seq = np.empty((batch, t_len, hsz))
    acts = np.empty((batch, t_len, 4 * hsz))
    h = np.zeros((batch, hsz))
    c = np.zeros((batch, hsz))
    for t in range(t_len):
        pre = xw[:, t] + h @ w_hh.data
        h, c, act = kernels.lstm_pointwise_forward(pre, c)
        h_seq[:, t] = h
        c_seq[:, t] = c
        acts[:, t] = act

    def backward(g):
        dxw = np.empty((batch, t_len, 4 * hsz))
        dw_hh = np.zeros_like(w_hh.data)
        dh_next = np.zeros((batch, hsz))
        dc_next = np.zeros((batch, hsz))
        zeros = np.zeros((batch, hsz))
        for t in range(t_len - 1, -1, -1):
            dh = g[:, t] + dh_next
            c_prev = c_seq[:, t - 1] if t > 0 else zeros
            dpre, dc_next = kernels.lstm_pointwise_backward(
                dh, dc_next, acts[:, t], c_prev, c_seq[:, t]
            )
            dxw[:, t] = dpre
            h_prev = h_seq[:, t - 1] if t > 0 else zeros
            dw_hh += h_prev.T @ dpre
            dh_next = dpre @ w_hh.data.T
        flat = dxw.reshape(batch * t_len, 4 * hsz)
        if w_hh.requires_grad:
            w_hh._accumulate(dw_hh)
        if w_ih.requires_grad:
            w_ih._accumulate(x.data.reshape(batch * t_len, -1).T @ flat)
        if bias.requires_grad:
            bias._accumulate(flat.sum(axis=0))
        if x.requires_grad:
            x._accumulate((flat @ w_ih.data.T).reshape(x.data.shape))

    return _make(h_seq, (x, w_ih, w_hh, bias), backward)
