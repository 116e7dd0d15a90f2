# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Contracts and layouts: steerlab.autodiff.kernels."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt, tanh

cnp.import_array()


cdef inline double _expit(double x) noexcept nogil:
    # unbranched form matches the numpy backend; exp overflow saturates to 0
    return 1.0 / (1.0 + exp(-x))


def lstm_pointwise_forward(double[:, ::1] preact, double[:, ::1] c_prev):
    cdef Py_ssize_t batch = preact.shape[0]
    cdef Py_ssize_t hsz = c_prev.shape[1]
    h_arr = np.empty((batch, hsz))
    c_arr = np.empty((batch, hsz))
    act_arr = np.empty((batch, 4 * hsz))
    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] c = c_arr
    cdef double[:, ::1] act = act_arr
    cdef Py_ssize_t b, k
    cdef double gi, gf, gg, go, cc
    with nogil:
        for b in range(batch):
            for k in range(hsz):
                gi = _expit(preact[b, k])
                gf = _expit(preact[b, hsz + k])
                gg = tanh(preact[b, 2 * hsz + k])
                go = _expit(preact[b, 3 * hsz + k])
                cc = gf * c_prev[b, k] + gi * gg
                c[b, k] = cc
                h[b, k] = go * tanh(cc)
                act[b, k] = gi
                act[b, hsz + k] = gf
                act[b, 2 * hsz + k] = gg
                act[b, 3 * hsz + k] = go
    return h_arr, c_arr, act_arr


def lstm_pointwise_backward(double[:, ::1] dh, double[:, ::1] dc_in,
                            double[:, ::1] act, double[:, ::1] c_prev,
                            double[:, ::1] c):
    cdef Py_ssize_t batch = dh.shape[0]
    cdef Py_ssize_t hsz = dh.shape[1]
    dpre_arr = np.empty((batch, 4 * hsz))
    dc_prev_arr = np.empty((batch, hsz))
    cdef double[:, ::1] dpre = dpre_arr
    cdef double[:, ::1] dc_prev = dc_prev_arr
    cdef Py_ssize_t b, k
    cdef double gi, gf, gg, go, tc, dcv, dov
    with nogil:
        for b in range(batch):
            for k in range(hsz):
                gi = act[b, k]
                gf = act[b, hsz + k]
                gg = act[b, 2 * hsz + k]
                go = act[b, 3 * hsz + k]
                tc = tanh(c[b, k])
                dov = dh[b, k] * tc
                dcv = dc_in[b, k] + dh[b, k] * go * (1.0 - tc * tc)
                dpre[b, k] = dcv * gg * gi * (1.0 - gi)
                dpre[b, hsz + k] = dcv * c_prev[b, k] * gf * (1.0 - gf)
                dpre[b, 2 * hsz + k] = dcv * gi * (1.0 - gg * gg)
                dpre[b, 3 * hsz + k] = dov * go * (1.0 - go)
                dc_prev[b, k] = dcv * gf
    return dpre_arr, dc_prev_arr


def causal_conv1d_forward(double[:, :, ::1] x, double[:, :, ::1] w, int dilation):
    cdef Py_ssize_t batch = x.shape[0], c_in = x.shape[1], t_len = x.shape[2]
    cdef Py_ssize_t c_out = w.shape[0], ksize = w.shape[2]
    y_arr = np.zeros((batch, c_out, t_len))
    cdef double[:, :, ::1] y = y_arr
    cdef Py_ssize_t b, o, c, j, t, off
    cdef double wv
    with nogil:
        for b in range(batch):
            for o in range(c_out):
                for c in range(c_in):
                    for j in range(ksize):
                        off = (ksize - 1 - j) * dilation
                        if off >= t_len:
                            continue
                        wv = w[o, c, j]
                        for t in range(off, t_len):
                            y[b, o, t] += wv * x[b, c, t - off]
    return y_arr


def causal_conv1d_dx(double[:, :, ::1] dy, double[:, :, ::1] w, int dilation):
    cdef Py_ssize_t batch = dy.shape[0], c_out = dy.shape[1], t_len = dy.shape[2]
    cdef Py_ssize_t c_in = w.shape[1], ksize = w.shape[2]
    dx_arr = np.zeros((batch, c_in, t_len))
    cdef double[:, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, o, c, j, t, off
    cdef double wv
    with nogil:
        for b in range(batch):
            for o in range(c_out):
                for c in range(c_in):
                    for j in range(ksize):
                        off = (ksize - 1 - j) * dilation
                        if off >= t_len:
                            continue
                        wv = w[o, c, j]
                        for t in range(off, t_len):
                            dx[b, c, t - off] += wv * dy[b, o, t]
    return dx_arr


def causal_conv1d_dw(double[:, :, ::1] dy, double[:, :, ::1] x, int ksize, int dilation):
    cdef Py_ssize_t batch = dy.shape[0], c_out = dy.shape[1], t_len = dy.shape[2]
    cdef Py_ssize_t c_in = x.shape[1]
    dw_arr = np.zeros((c_out, c_in, ksize))
    cdef double[:, :, ::1] dw = dw_arr
    cdef Py_ssize_t b, o, c, j, t, off
    cdef double acc
    with nogil:
        for o in range(c_out):
            for c in range(c_in):
                for j in range(ksize):
                    off = (ksize - 1 - j) * dilation
                    if off >= t_len:
                        continue
                    acc = 0.0
                    for b in range(batch):
                        for t in range(off, t_len):
                            acc += dy[b, o, t] * x[b, c, t - off]
                    dw[o, c, j] = acc
    return dw_arr


def adam_step(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
              double lr, double beta1, double beta2, double eps,
              double bc1, double bc2):
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t k
    with nogil:
        for k in range(n):
            m[k] = beta1 * m[k] + (1.0 - beta1) * g[k]
            v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k]
            p[k] -= lr * (m[k] / bc1) / (sqrt(v[k] / bc2) + eps)
