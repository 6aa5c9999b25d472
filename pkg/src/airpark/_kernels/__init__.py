"""Hot kernels with a compiled backend and a pure numpy fallback.

The compiled extension (``_ext``) is used when it imports; otherwise the
numpy twins in ``_pure`` are used. Set ``AIRPARK_PURE_PYTHON=1`` to force
the fallback. Both backends return bitwise-identical arrays.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pure

_NAMES = (
    "im2col2d", "col2im2d", "im2col1d", "col2im1d",
    "maxpool2d_forward", "maxpool2d_backward",
    "maxpool1d_forward", "maxpool1d_backward",
    "block_levels",
)


def _load_ext():
    if os.environ.get("AIRPARK_PURE_PYTHON", "") not in ("", "0"):
        return None
    try:
        from . import _ext
    except ImportError:
        return None
    return _ext


_ext_module = _load_ext()
BACKEND = "cython" if _ext_module is not None else "numpy"


def backend_module(name: str | None = None):
    """Return the kernel module for ``name`` ('cython' or 'numpy'), default active."""
    name = name or BACKEND
    if name == "numpy":
        return _pure
    if name == "cython":
        if _ext_module is None:
            raise RuntimeError("compiled kernels are not available")
        return _ext_module
    raise ValueError(f"unknown backend {name!r}")


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


_impl = backend_module()


def im2col2d(x, kh, kw):
    return _impl.im2col2d(_c(x), kh, kw)


def col2im2d(cols, shape, kh, kw):
    return _impl.col2im2d(_c(cols), tuple(shape), kh, kw)


def im2col1d(x, k, pad):
    return _impl.im2col1d(_c(x), k, pad)


def col2im1d(cols, shape, k, pad):
    return _impl.col2im1d(_c(cols), tuple(shape), k, pad)


def maxpool2d_forward(x):
    return _impl.maxpool2d_forward(_c(x))


def maxpool2d_backward(grad, idx, shape):
    return _impl.maxpool2d_backward(_c(grad), np.ascontiguousarray(idx, dtype=np.int64), tuple(shape))


def maxpool1d_forward(x):
    return _impl.maxpool1d_forward(_c(x))


def maxpool1d_backward(grad, idx, shape):
    return _impl.maxpool1d_backward(_c(grad), np.ascontiguousarray(idx, dtype=np.int64), tuple(shape))


def block_levels(values, thresholds, min_stations, run_hours, same_stations=True):
    return _impl.block_levels(_c(values), _c(thresholds), int(min_stations), int(run_hours),
                              bool(same_stations))
