"""Hot numeric kernels with two interchangeable backends.

The compiled Cython extension (``steerlab.autodiff._ckernels``) is picked
at import when present; otherwise the pure-numpy implementations below
are used. Backends agree to floating-point rounding (parity-tested at
1e-12 relative); within one backend every kernel is bit-deterministic.

Set ``STEERLAB_PUREPY=1`` to force the numpy backend; call
:func:`use_backend` to switch explicitly (mainly for parity tests and
benchmarks).

Kernel inventory, all float64:

- LSTM fused gate pointwise (forward/backward), gate layout [i|f|g|o].
- Causal dilated 1-d convolution (forward, input grad, weight grad);
  tap j reaches back ``(K-1-j)*dilation`` steps, so output t never sees
  input beyond t.
- Fused Adam parameter update (in place).
"""

from __future__ import annotations

import os

import numpy as np

# -- numpy reference implementations ----------------------------------------


def _sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _np_lstm_pointwise_forward(preact: np.ndarray, c_prev: np.ndarray):
    hsz = c_prev.shape[1]
    i = _sigmoid(preact[:, :hsz])
    f = _sigmoid(preact[:, hsz : 2 * hsz])
    g = np.tanh(preact[:, 2 * hsz : 3 * hsz])
    o = _sigmoid(preact[:, 3 * hsz :])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    act = np.concatenate([i, f, g, o], axis=1)
    return h, c, act


def _np_lstm_pointwise_backward(dh, dc_in, act, c_prev, c):
    hsz = c_prev.shape[1]
    i = act[:, :hsz]
    f = act[:, hsz : 2 * hsz]
    g = act[:, 2 * hsz : 3 * hsz]
    o = act[:, 3 * hsz :]
    tc = np.tanh(c)
    do = dh * tc
    dc = dc_in + dh * o * (1.0 - tc * tc)
    dpre = np.empty_like(act)
    dpre[:, :hsz] = dc * g * i * (1.0 - i)
    dpre[:, hsz : 2 * hsz] = dc * c_prev * f * (1.0 - f)
    dpre[:, 2 * hsz : 3 * hsz] = dc * i * (1.0 - g * g)
    dpre[:, 3 * hsz :] = do * o * (1.0 - o)
    dc_prev = dc * f
    return dpre, dc_prev


def _np_causal_conv1d_forward(x: np.ndarray, w: np.ndarray, dilation: int) -> np.ndarray:
    batch, _, t_len = x.shape
    c_out, _, ksize = w.shape
    y = np.zeros((batch, c_out, t_len))
    for j in range(ksize):
        off = (ksize - 1 - j) * dilation
        if off >= t_len:
            continue
        if off == 0:
            y += np.matmul(w[:, :, j], x)
        else:
            y[:, :, off:] += np.matmul(w[:, :, j], x[:, :, : t_len - off])
    return y


def _np_causal_conv1d_dx(dy: np.ndarray, w: np.ndarray, dilation: int) -> np.ndarray:
    batch, _, t_len = dy.shape
    _, c_in, ksize = w.shape
    dx = np.zeros((batch, c_in, t_len))
    for j in range(ksize):
        off = (ksize - 1 - j) * dilation
        if off >= t_len:
            continue
        if off == 0:
            dx += np.matmul(w[:, :, j].T, dy)
        else:
            dx[:, :, : t_len - off] += np.matmul(w[:, :, j].T, dy[:, :, off:])
    return dx


def _np_causal_conv1d_dw(dy: np.ndarray, x: np.ndarray, ksize: int, dilation: int) -> np.ndarray:
    _, c_in, t_len = x.shape
    _, c_out, _ = dy.shape
    dw = np.zeros((c_out, c_in, ksize))
    for j in range(ksize):
        off = (ksize - 1 - j) * dilation
        if off >= t_len:
            continue
        dw[:, :, j] = np.tensordot(dy[:, :, off:], x[:, :, : t_len - off], axes=([0, 2], [0, 2]))
    return dw


def _np_adam_step(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


_NUMPY_BACKEND = {
    "lstm_pointwise_forward": _np_lstm_pointwise_forward,
    "lstm_pointwise_backward": _np_lstm_pointwise_backward,
    "causal_conv1d_forward": _np_causal_conv1d_forward,
    "causal_conv1d_dx": _np_causal_conv1d_dx,
    "causal_conv1d_dw": _np_causal_conv1d_dw,
    "adam_step": _np_adam_step,
}

_BACKENDS: dict[str, dict] = {"numpy": _NUMPY_BACKEND}

try:  # compiled extension is optional; numpy fallback is always available
    from . import _ckernels

    def _c(x):
        return np.ascontiguousarray(x, dtype=np.float64)

    # Per-kernel selection, measured by benchmarks/bench_kernels.py: the
    # compiled loops win on the causal convolutions' forward/dx and the LSTM
    # backward, while numpy keeps conv dw (its gathered-window matmul hits
    # BLAS) and the LSTM forward (vectorized transcendentals beat the loop).
    _BACKENDS["cython"] = {
        "lstm_pointwise_forward": _np_lstm_pointwise_forward,
        "lstm_pointwise_backward": lambda dh, dc, act, cp, c: _ckernels.lstm_pointwise_backward(
            _c(dh), _c(dc), _c(act), _c(cp), _c(c)
        ),
        "causal_conv1d_forward": lambda x, w, d: _ckernels.causal_conv1d_forward(_c(x), _c(w), d),
        "causal_conv1d_dx": lambda dy, w, d: _ckernels.causal_conv1d_dx(_c(dy), _c(w), d),
        "causal_conv1d_dw": _np_causal_conv1d_dw,
        "adam_step": _ckernels.adam_step,
    }
    HAVE_EXTENSION = True
except ImportError:
    HAVE_EXTENSION = False

_DEFAULT = (
    "cython" if HAVE_EXTENSION and not os.environ.get("STEERLAB_PUREPY") else "numpy"
)
_active = _BACKENDS[_DEFAULT]
_active_name = _DEFAULT


def backend_name() -> str:
    return _active_name


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def use_backend(name: str) -> None:
    global _active, _active_name
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    _active = _BACKENDS[name]
    _active_name = name


def lstm_pointwise_forward(preact, c_prev):
    return _active["lstm_pointwise_forward"](preact, c_prev)


def lstm_pointwise_backward(dh, dc_in, act, c_prev, c):
    return _active["lstm_pointwise_backward"](dh, dc_in, act, c_prev, c)


def causal_conv1d_forward(x, w, dilation):
    return _active["causal_conv1d_forward"](x, w, dilation)


def causal_conv1d_dx(dy, w, dilation):
    return _active["causal_conv1d_dx"](dy, w, dilation)


def causal_conv1d_dw(dy, x, ksize, dilation):
    return _active["causal_conv1d_dw"](dy, x, ksize, dilation)


def adam_step(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    _active["adam_step"](p, g, m, v, lr, beta1, beta2, eps, bc1, bc2)
