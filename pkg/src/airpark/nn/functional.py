"""Network ops with hand-written adjoints: convolution, pooling, LSTM, losses."""
from __future__ import annotations

import numpy as np

from .. import _kernels
from .tensor import Tensor, _sigmoid, _trace, add, as_tensor, make_node, matmul, relu


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Same-padded, stride-1 cross-correlation.

    x: (N, C, H, W) or (C, H, W); weight: (O, C, kh, kw) with odd kh, kw.
    """
    x = as_tensor(x)
    if x.ndim == 3:
        return _squeeze0(conv2d(_unsqueeze0(x), weight, bias))
    n, c, h, w = x.shape
    o, wc, kh, kw = weight.shape
    if wc != c:
        raise ValueError(f"conv2d expects {wc} input channels, got {c}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("same padding needs odd kernel extents")
    cols = _kernels.im2col2d(x.data, kh, kw)  # C*kh*kw, N*H*W
    wm = weight.data.reshape(o, -1)
    out = (wm @ cols).reshape(o, n, h, w).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def bw(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(o, -1)
        gw = (g2 @ cols.T).reshape(weight.shape)
        gx = _kernels.col2im2d(wm.T @ g2, x.shape, kh, kw) if x.requires_grad else None
        gb = g2.sum(axis=1) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make_node(np.ascontiguousarray(out), parents, bw)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, padding: str = "same") -> Tensor:
    """Stride-1 temporal cross-correlation; x: (N, C, T), weight: (O, C, k)."""
    n, c, t = x.shape
    o, wc, k = weight.shape
    if wc != c:
        raise ValueError(f"conv1d expects {wc} input channels, got {c}")
    if padding == "same":
        if k % 2 == 0:
            raise ValueError("same padding needs an odd kernel")
        pad = k // 2
    elif padding == "valid":
        pad = 0
        if k > t:
            raise ValueError(f"kernel {k} longer than sequence {t}")
    else:
        raise ValueError(f"unknown padding {padding!r}")
    t_out = t + 2 * pad - k + 1
    cols = _kernels.im2col1d(x.data, k, pad)
    wm = weight.data.reshape(o, -1)
    out = (wm @ cols).reshape(o, n, t_out).transpose(1, 0, 2)
    if bias is not None:
        out = out + bias.data[None, :, None]

    def bw(g):
        g2 = g.transpose(1, 0, 2).reshape(o, -1)
        gw = (g2 @ cols.T).reshape(weight.shape)
        gx = _kernels.col2im1d(wm.T @ g2, x.shape, k, pad) if x.requires_grad else None
        gb = g2.sum(axis=1) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make_node(np.ascontiguousarray(out), parents, bw)


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 window, stride 2; a trailing odd row/column is dropped."""
    x = as_tensor(x)
    if x.ndim == 3:
        return _squeeze0(maxpool2d(_unsqueeze0(x)))
    if x.shape[2] < 2 or x.shape[3] < 2:
        raise ValueError(f"maxpool2d needs H, W >= 2, got {x.shape}")
    out, idx = _kernels.maxpool2d_forward(x.data)
    _trace("maxpool2d", idx)
    shape = x.shape
    return make_node(out, (x,), lambda g: (_kernels.maxpool2d_backward(g, idx, shape),))


def maxpool1d(x: Tensor) -> Tensor:
    """Window 2, stride 2 over the last axis of (N, C, T)."""
    out, idx = _kernels.maxpool1d_forward(x.data)
    _trace("maxpool1d", idx)
    shape = x.shape
    return make_node(out, (x,), lambda g: (_kernels.maxpool1d_backward(g, idx, shape),))


def upsample1d(x: Tensor, factor: int) -> Tensor:
    """Nearest-neighbour repeat along the last axis."""
    n, c, t = x.shape
    return make_node(np.repeat(x.data, factor, axis=2), (x,),
                     lambda g: (g.reshape(n, c, t, factor).sum(axis=3),))


def lstm(x: Tensor, w_in: Tensor, w_rec: Tensor, bias: Tensor) -> Tensor:
    """Single LSTM layer over (N, T, F) or (T, F); returns every hidden state.

    Gate blocks along the 4H axis are ordered input, forget, candidate,
    output. Initial hidden and cell states are zero.
    """
    x = as_tensor(x)
    if x.ndim == 2:
        return _squeeze0(lstm(_unsqueeze0(x), w_in, w_rec, bias))
    n, t_len, f = x.shape
    hid = w_rec.shape[0]
    if w_in.shape != (f, 4 * hid) or w_rec.shape != (hid, 4 * hid) or bias.shape != (4 * hid,):
        raise ValueError("lstm weight shapes do not match the input")
    zx = x.data @ w_in.data + bias.data  # N, T, 4H
    U = w_rec.data
    gates = np.empty((t_len, n, 4 * hid))
    cells = np.empty((t_len + 1, n, hid))
    hs = np.empty((t_len + 1, n, hid))
    cells[0] = 0.0
    hs[0] = 0.0
    for t in range(t_len):
        z = zx[:, t] + hs[t] @ U
        a = gates[t]
        a[:, :hid] = _sigmoid(z[:, :hid])
        a[:, hid:2 * hid] = _sigmoid(z[:, hid:2 * hid])
        a[:, 2 * hid:3 * hid] = np.tanh(z[:, 2 * hid:3 * hid])
        a[:, 3 * hid:] = _sigmoid(z[:, 3 * hid:])
        cells[t + 1] = a[:, hid:2 * hid] * cells[t] + a[:, :hid] * a[:, 2 * hid:3 * hid]
        hs[t + 1] = a[:, 3 * hid:] * np.tanh(cells[t + 1])
    out = np.ascontiguousarray(hs[1:].transpose(1, 0, 2))

    def bw(g):
        dz_all = np.empty((t_len, n, 4 * hid))
        dh_next = np.zeros((n, hid))
        dc_next = np.zeros((n, hid))
        for t in range(t_len - 1, -1, -1):
            a = gates[t]
            i, fg, cand, o = a[:, :hid], a[:, hid:2 * hid], a[:, 2 * hid:3 * hid], a[:, 3 * hid:]
            tc = np.tanh(cells[t + 1])
            dh = g[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = dz_all[t]
            dz[:, :hid] = dc * cand * i * (1.0 - i)
            dz[:, hid:2 * hid] = dc * cells[t] * fg * (1.0 - fg)
            dz[:, 2 * hid:3 * hid] = dc * i * (1.0 - cand * cand)
            dz[:, 3 * hid:] = dh * tc * o * (1.0 - o)
            dc_next = dc * fg
            dh_next = dz @ U.T
        dz_nt = dz_all.transpose(1, 0, 2)  # N, T, 4H
        flat = dz_nt.reshape(-1, 4 * hid)
        g_in = x.data.reshape(-1, f).T @ flat
        g_rec = hs[:-1].reshape(-1, hid).T @ dz_all.reshape(-1, 4 * hid)
        g_b = flat.sum(axis=0)
        gx = (dz_nt @ w_in.data.T) if x.requires_grad else None
        return gx, g_in, g_rec, g_b

    return make_node(out, (x, w_in, w_rec, bias), bw)


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None, activation: str = "none") -> Tensor:
    """Affine map ``x @ weight + bias`` followed by relu, softmax or nothing."""
    x = as_tensor(x)
    if x.shape[-1] != weight.shape[0]:
        raise ValueError(f"dense expects {weight.shape[0]} features, got {x.shape[-1]}")
    y = matmul(x, weight)
    if bias is not None:
        y = add(y, bias)
    if activation == "relu":
        return relu(y)
    if activation == "softmax":
        return softmax(y)
    if activation != "none":
        raise ValueError(f"unknown activation {activation!r}")
    return y


def softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)
    return make_node(s, (x,), lambda g: (s * (g - (g * s).sum(axis=-1, keepdims=True)),))


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits: Tensor, target) -> Tensor:
    """Mean over the batch of ``-log softmax(logits)[target]``.

    logits: (N, K) with integer targets (N,), or (K,) with a scalar target.
    """
    logits = as_tensor(logits)
    single = logits.ndim == 1
    z = logits.data[None] if single else logits.data
    tgt = np.atleast_1d(np.asarray(target, dtype=np.int64))
    n, k = z.shape
    if k < 2 or tgt.shape != (n,) or tgt.min() < 0 or tgt.max() >= k:
        raise ValueError("targets must be class indices below the logit count")
    logp = log_softmax(z)
    loss = -logp[np.arange(n), tgt].mean()

    def bw(g):
        p = np.exp(logp)
        p[np.arange(n), tgt] -= 1.0
        p *= g / n
        return (p[0] if single else p,)

    return make_node(np.array(loss), (logits,), bw)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return make_node(x.data * keep, (x,), lambda g: (g * keep,))


def _unsqueeze0(x: Tensor) -> Tensor:
    return make_node(x.data[None], (x,), lambda g: (g[0],))


def _squeeze0(x: Tensor) -> Tensor:
    return make_node(x.data[0], (x,), lambda g: (g[None],))
