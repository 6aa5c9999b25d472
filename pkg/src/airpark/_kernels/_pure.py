"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_ext.pyx`` and the two must agree
bitwise: data movement is exact, and the only accumulation (``col2im``)
adds kernel offsets in the same lexicographic order on both sides.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col2d(x, kh, kw):
    """(N, C, H, W) -> (C*kh*kw, N*H*W) patch matrix for 'same' padding."""
    n, c, h, w = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.zeros((n, c, h + 2 * ph, w + 2 * pw))
    xp[:, :, ph:ph + h, pw:pw + w] = x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # n, c, h, w, kh, kw
    return np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3)).reshape(c * kh * kw, n * h * w)


def col2im2d(cols, shape, kh, kw):
    n, c, h, w = shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros((n, c, h + 2 * ph, w + 2 * pw))
    cols6 = cols.reshape(c, kh, kw, n, h, w)
    for di in range(kh):
        for dj in range(kw):
            out[:, :, di:di + h, dj:dj + w] += cols6[:, di, dj].transpose(1, 0, 2, 3)
    return np.ascontiguousarray(out[:, :, ph:ph + h, pw:pw + w])


def im2col1d(x, k, pad):
    """(N, C, T) -> (C*k, N*T_out) with T_out = T + 2*pad - k + 1."""
    n, c, t = x.shape
    xp = np.zeros((n, c, t + 2 * pad))
    xp[:, :, pad:pad + t] = x
    win = sliding_window_view(xp, k, axis=2)  # n, c, t_out, k
    t_out = win.shape[2]
    return np.ascontiguousarray(win.transpose(1, 3, 0, 2)).reshape(c * k, n * t_out)


def col2im1d(cols, shape, k, pad):
    n, c, t = shape
    t_out = t + 2 * pad - k + 1
    out = np.zeros((n, c, t + 2 * pad))
    cols4 = cols.reshape(c, k, n, t_out)
    for d in range(k):
        out[:, :, d:d + t_out] += cols4[:, d].transpose(1, 0, 2)
    return np.ascontiguousarray(out[:, :, pad:pad + t])


def maxpool2d_forward(x):
    """2x2 / stride 2 max pool; returns (out, argidx) with argidx in 0..3."""
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    win = x[:, :, :2 * ho, :2 * wo].reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, ho, wo, 4)
    idx = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx.astype(np.int64)


def maxpool2d_backward(grad, idx, shape):
    n, c, h, w = shape
    ho, wo = h // 2, w // 2
    win = np.zeros((n, c, ho, wo, 4))
    np.put_along_axis(win, idx[..., None], grad[..., None], axis=-1)
    out = np.zeros(shape)
    out[:, :, :2 * ho, :2 * wo] = (
        win.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
    )
    return out


def maxpool1d_forward(x):
    n, c, t = x.shape
    to = t // 2
    win = x[:, :, :2 * to].reshape(n, c, to, 2)
    idx = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx.astype(np.int64)


def maxpool1d_backward(grad, idx, shape):
    n, c, t = shape
    to = t // 2
    win = np.zeros((n, c, to, 2))
    np.put_along_axis(win, idx[..., None], grad[..., None], axis=-1)
    out = np.zeros(shape)
    out[:, :, :2 * to] = win.reshape(n, c, 2 * to)
    return out


def block_levels(values, thresholds, min_stations, run_hours, same_stations):
    """Alert level per block.

    values: (B, S, R) concentrations inside each block.
    thresholds: (B, S, K) per-station thresholds, ascending severity.
    Returns int64 (B,) with 0 for no trigger, else 1 + highest triggered k.
    """
    b, s, r = values.shape
    k = thresholds.shape[2]
    if r < run_hours:
        return np.zeros(b, dtype=np.int64)
    exceed = values[:, None, :, :] > thresholds.transpose(0, 2, 1)[:, :, :, None]  # B, K, S, R
    runs = sliding_window_view(exceed, run_hours, axis=3)  # B, K, S, R-run+1, run
    if same_stations:
        hits = runs.all(axis=-1).sum(axis=2) >= min_stations  # B, K, starts
    else:
        per_hour = exceed.sum(axis=2) >= min_stations  # B, K, R
        hits = sliding_window_view(per_hour, run_hours, axis=2).all(axis=-1)
    trig = hits.any(axis=-1)  # B, K
    top = k - np.argmax(trig[:, ::-1], axis=1)
    return np.where(trig.any(axis=1), top, 0).astype(np.int64)
