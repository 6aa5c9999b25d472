"""Weight initialization schemes."""
from __future__ import annotations

import numpy as np


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def conv_weight(rng, out_ch: int, in_ch: int, *kernel: int) -> np.ndarray:
    k = int(np.prod(kernel))
    return glorot_uniform(rng, (out_ch, in_ch, *kernel), in_ch * k, out_ch * k)


def lstm_weights(rng, n_in: int, hidden: int):
    """Input/recurrent matrices (gate blocks i, f, g, o) and bias with forget bias 1."""
    w_in = np.concatenate([glorot_uniform(rng, (n_in, hidden), n_in, hidden) for _ in range(4)], axis=1)
    w_rec = np.concatenate([glorot_uniform(rng, (hidden, hidden), hidden, hidden) for _ in range(4)], axis=1)
    bias = np.zeros(4 * hidden)
    bias[hidden:2 * hidden] = 1.0
    return w_in, w_rec, bias
