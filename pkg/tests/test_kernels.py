"""The compiled and numpy kernel backends must agree bit for bit."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airpark import _kernels

pure = _kernels.backend_module("numpy")
try:
    ext = _kernels.backend_module("cython")
except RuntimeError:  # extension not built
    ext = None

needs_ext = pytest.mark.skipif(ext is None, reason="compiled kernels not built")


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()


shapes4 = st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(1, 9), st.integers(1, 9))
odd_k = st.sampled_from([1, 3, 5])


@needs_ext
@settings(max_examples=60, deadline=None)
@given(shapes4, odd_k, odd_k, st.integers(0, 2 ** 31))
def test_conv2d_kernels(shape, kh, kw, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal(shape)
    cols = pure.im2col2d(x, kh, kw)
    assert same(cols, ext.im2col2d(x, kh, kw))
    g = r.standard_normal(cols.shape)
    assert same(pure.col2im2d(g, shape, kh, kw), ext.col2im2d(g, shape, kh, kw))


@needs_ext
@settings(max_examples=60, deadline=None)
@given(st.tuples(st.integers(1, 3), st.integers(1, 4), st.integers(1, 20)), st.integers(1, 7), st.booleans(),
       st.integers(0, 2 ** 31))
def test_conv1d_kernels(shape, k, same_pad, seed):
    if k > shape[2] and not same_pad:
        k = shape[2]
    if same_pad and k % 2 == 0:
        k += 1
    pad = k // 2 if same_pad else 0
    r = np.random.default_rng(seed)
    x = r.standard_normal(shape)
    cols = pure.im2col1d(x, k, pad)
    assert same(cols, ext.im2col1d(x, k, pad))
    g = r.standard_normal(cols.shape)
    assert same(pure.col2im1d(g, shape, k, pad), ext.col2im1d(g, shape, k, pad))


@needs_ext
@settings(max_examples=60, deadline=None)
@given(st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(2, 9), st.integers(2, 9)), st.integers(0, 2 ** 31),
       st.booleans())
def test_maxpool2d(shape, seed, ties):
    r = np.random.default_rng(seed)
    x = r.integers(0, 3, size=shape).astype(float) if ties else r.standard_normal(shape)
    a, b = pure.maxpool2d_forward(x), ext.maxpool2d_forward(x)
    assert same(a, b)
    g = r.standard_normal(a[0].shape)
    assert same(pure.maxpool2d_backward(g, a[1], shape), ext.maxpool2d_backward(g, b[1], shape))


@needs_ext
@settings(max_examples=60, deadline=None)
@given(st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(2, 15)), st.integers(0, 2 ** 31), st.booleans())
def test_maxpool1d(shape, seed, ties):
    r = np.random.default_rng(seed)
    x = r.integers(0, 3, size=shape).astype(float) if ties else r.standard_normal(shape)
    a, b = pure.maxpool1d_forward(x), ext.maxpool1d_forward(x)
    assert same(a, b)
    g = r.standard_normal(a[0].shape)
    assert same(pure.maxpool1d_backward(g, a[1], shape), ext.maxpool1d_backward(g, b[1], shape))


@needs_ext
@settings(max_examples=60, deadline=None)
@given(st.integers(3, 12), st.integers(1, 4), st.integers(1, 6), st.booleans(), st.integers(0, 2 ** 31))
def test_block_levels(n_st, min_st, run, same_st, seed):
    r = np.random.default_rng(seed)
    vals = r.uniform(0, 100, size=(20, n_st, 6))
    thr = np.sort(r.uniform(10, 90, size=(20, n_st, 3)), axis=2)
    a = pure.block_levels(vals, thr, min(min_st, n_st), run, same_st)
    b = ext.block_levels(vals, thr, min(min_st, n_st), run, same_st)
    assert a.dtype == b.dtype == np.int64 and np.array_equal(a, b)


def test_block_levels_matches_oracle():
    from airpark.labeling import RuleSpec
    from conftest import brute_force_level

    r = np.random.default_rng(0)
    for same_st in (True, False):
        rule = RuleSpec("RuleI", (75, 90, 95), same_stations=same_st)
        vals = r.uniform(0, 100, size=(200, 7, 6))
        thr = np.sort(r.uniform(20, 80, size=(200, 7, 3)), axis=2)
        got = _kernels.block_levels(vals, thr, 3, 3, same_st)
        assert [brute_force_level(v, t, rule) for v, t in zip(vals, thr)] == got.tolist()


def test_maxpool_examples():
    out, _ = _kernels.maxpool2d_forward(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
    assert out.tolist() == [[[[4.0]]]]
    ramp = np.arange(16.0).reshape(1, 1, 4, 4)
    assert _kernels.maxpool2d_forward(ramp)[0].tolist() == [[[[5.0, 7.0], [13.0, 15.0]]]]
    odd = np.arange(15.0).reshape(1, 1, 3, 5)
    assert _kernels.maxpool2d_forward(odd)[0].shape == (1, 1, 1, 2)


def test_backend_name():
    assert _kernels.BACKEND in ("cython", "numpy")
    with pytest.raises(ValueError):
        _kernels.backend_module("fortran")


def test_forced_fallback_subprocess():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-c", "import airpark; print(airpark.BACKEND)"],
                         env={**__import__("os").environ, "AIRPARK_PURE_PYTHON": "1"},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
