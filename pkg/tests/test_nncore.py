import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airpark.nn import functional as F
from airpark.nn.gradcheck import check_gradients, relative_error
from airpark.nn.init import glorot_uniform, lstm_weights
from airpark.nn.optim import Adam, AdamConfig
from airpark.nn.tensor import Parameter, Tensor, backward, concat, matmul, mean, mul, relu, reshape, tsum


def P(a, name=None):
    return Parameter(np.asarray(a, dtype=float), name=name)


class TestMatmul:
    def test_identity(self, rng):
        b = rng.standard_normal((2, 3))
        assert np.array_equal(matmul(np.eye(2), b).data, b)

    def test_hand(self):
        assert matmul(np.array([[1.0, 2], [3, 4]]), np.array([[1.0], [1]])).data.tolist() == [[3], [7]]

    def test_zero(self, rng):
        assert not matmul(np.zeros((2, 2)), rng.standard_normal((2, 5))).data.any()

    def test_mismatch(self):
        with pytest.raises(ValueError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))


class TestConv:
    def test_delta_kernel_identity(self, rng):
        x = rng.standard_normal((1, 5, 4))
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, 1] = 1.0
        assert np.array_equal(F.conv2d(x, P(w)).data, x)

    def test_center_sum(self):
        out = F.conv2d(np.ones((1, 3, 3)), P(np.ones((1, 1, 3, 3)))).data
        assert out[0, 1, 1] == 9 and out[0, 0, 0] == 4

    def test_zero_kernel(self, rng):
        assert not F.conv2d(rng.standard_normal((2, 4, 4)), P(np.zeros((3, 2, 3, 3)))).data.any()

    def test_even_kernel_and_channels(self):
        with pytest.raises(ValueError):
            F.conv2d(np.ones((1, 3, 3)), P(np.ones((1, 1, 2, 2))))
        with pytest.raises(ValueError):
            F.conv2d(np.ones((2, 3, 3)), P(np.ones((1, 1, 3, 3))))

    def test_conv1d_valid(self):
        x = Tensor(np.arange(5.0)[None, None])
        out = F.conv1d(x, P(np.ones((1, 1, 3))), padding="valid").data
        assert out.tolist() == [[[3.0, 6.0, 9.0]]]

    def test_cross_correlation_no_flip(self):
        x = Tensor(np.array([[[0.0, 1.0, 0.0]]]))
        out = F.conv1d(x, P(np.array([[[1.0, 2.0, 3.0]]])))
        assert out.data.tolist() == [[[3.0, 2.0, 1.0]]]


class TestLSTM:
    def test_zero_everything(self):
        out = F.lstm(np.zeros((4, 3)), P(np.zeros((3, 8))), P(np.zeros((2, 8))), P(np.zeros(8)))
        assert out.shape == (4, 2) and not out.data.any()

    def test_scalar_step(self):
        # H=1, F=1: gate pre-activations are w*x + b
        w = np.array([[0.5, -0.3, 0.8, 1.2]])
        b = np.array([0.1, 1.0, -0.2, 0.3])
        x = 0.7
        z = w[0] * x + b
        sig = lambda v: 1 / (1 + math.exp(-v))  # noqa: E731
        c = sig(z[1]) * 0.0 + sig(z[0]) * math.tanh(z[2])
        h = sig(z[3]) * math.tanh(c)
        out = F.lstm(np.array([[x]]), P(w), P(np.zeros((1, 4))), P(b))
        assert out.data[0, 0] == pytest.approx(h, abs=1e-15)

    def test_causality(self, rng):
        w_in, w_rec, b = (P(a) for a in lstm_weights(rng, 3, 5))
        x = rng.standard_normal((6, 3))
        x_long = np.concatenate([x, np.zeros((6, 3))])
        assert np.array_equal(F.lstm(x, w_in, w_rec, b).data, F.lstm(x_long, w_in, w_rec, b).data[:6])

    def test_batched_equals_single(self, rng):
        w_in, w_rec, b = (P(a) for a in lstm_weights(rng, 3, 4))
        x = rng.standard_normal((2, 5, 3))
        batched = F.lstm(x, w_in, w_rec, b).data
        assert np.allclose(batched[1], F.lstm(x[1], w_in, w_rec, b).data, rtol=0, atol=1e-14)

    def test_forget_bias_init(self, rng):
        _, _, b = lstm_weights(rng, 3, 4)
        assert b.tolist() == [0] * 4 + [1] * 4 + [0] * 8


class TestDense:
    def test_bias_only(self):
        out = F.dense(np.ones((1, 3)), P(np.zeros((3, 2))), P([1.5, -2.0]))
        assert out.data.tolist() == [[1.5, -2.0]]

    def test_relu(self):
        assert relu(Tensor([-1.0, 2.0])).data.tolist() == [0.0, 2.0]

    def test_softmax_uniform(self):
        out = F.dense(np.ones((1, 3)), P(np.zeros((3, 4))), P(np.zeros(4)), "softmax")
        assert np.allclose(out.data, 0.25, rtol=0, atol=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-700, 700), min_size=2, max_size=10))
    def test_softmax_simplex(self, xs):
        s = F.softmax(Tensor(np.array(xs))).data
        assert np.all(s >= 0) and abs(s.sum() - 1) <= 1e-12


class TestDropout:
    def test_identity_modes(self, rng):
        x = Tensor(rng.standard_normal(10))
        assert F.dropout(x, 0.05, None, training=False) is x
        assert F.dropout(x, 0.0, rng, training=True) is x

    def test_seeded_mask(self):
        x = Tensor(np.ones(1000))
        a = F.dropout(x, 0.3, np.random.default_rng(5), True).data
        b = F.dropout(x, 0.3, np.random.default_rng(5), True).data
        assert np.array_equal(a, b)

    def test_mean_preserved(self):
        n, rate = 100_000, 0.05
        out = F.dropout(Tensor(np.ones(n)), rate, np.random.default_rng(0), True).data
        sigma = math.sqrt(rate / (1 - rate) / n)
        assert abs(out.mean() - 1.0) < 3 * sigma
        assert set(np.unique(out)) <= {0.0, 1 / (1 - rate)}

    def test_rate_range(self):
        with pytest.raises(ValueError):
            F.dropout(Tensor(np.ones(3)), 1.0, None, True)


class TestCrossEntropy:
    def test_uniform(self):
        assert float(F.softmax_cross_entropy(np.zeros(4), 2).data) == pytest.approx(math.log(4), abs=1e-15)

    def test_hand(self):
        got = float(F.softmax_cross_entropy(np.array([1.0, 0, 0, 0]), 0).data)
        assert got == pytest.approx(math.log(math.e + 3) - 1, abs=1e-15)

    def test_limit(self):
        assert float(F.softmax_cross_entropy(np.array([50.0, 0, 0, 0]), 0).data) < 1e-20

    def test_stable_large_logits(self):
        v = float(F.softmax_cross_entropy(np.array([1000.0, 0, 0, 0]), 1).data)
        assert v == pytest.approx(1000.0)

    def test_bad_target(self):
        with pytest.raises(ValueError):
            F.softmax_cross_entropy(np.zeros(4), 4)


class TestBackward:
    def test_constant_loss(self):
        p = P(np.ones(3))
        loss = tsum(mul(p, 0.0))
        backward(loss)
        assert not p.grad.any()

    def test_non_scalar(self):
        with pytest.raises(ValueError):
            backward(mul(P(np.ones(3)), 2.0))

    def test_dense_quadratic_closed_form(self, rng):
        W = P(rng.standard_normal((3, 2)))
        x = rng.standard_normal((5, 3))
        y = rng.standard_normal((5, 2))
        r = matmul(x, W) - y
        backward(tsum(mul(r, r)))
        assert np.allclose(W.grad, 2 * x.T @ (x @ W.data - y), rtol=1e-13, atol=1e-13)

    def test_shared_node_accumulates(self):
        p = P([3.0])
        backward(tsum(mul(p, p) + p))
        assert p.grad.tolist() == [7.0]

    def test_matmul_chain_fd(self, rng):
        A, B = P(rng.standard_normal((3, 4))), P(rng.standard_normal((4, 2)))
        x = rng.standard_normal((5, 3))
        rep = check_gradients(lambda: mean(relu(matmul(matmul(x, A), B))), [A, B], n_coords=100)
        assert rep.max_error < 1e-7 and rep.checked > 0

    def test_linear_model_exact(self, rng):
        W, b = P(rng.standard_normal((4, 3))), P(rng.standard_normal(3))
        x, y = rng.standard_normal((6, 4)), rng.integers(0, 3, 6)
        rep = check_gradients(lambda: F.softmax_cross_entropy(F.dense(x, W, b), y), [W, b])
        assert rep.max_error < 1e-9 and rep.checked == W.size + b.size

    def test_structural_ops_fd(self, rng):
        a, b = P(rng.standard_normal((2, 3))), P(rng.standard_normal((2, 2)))

        def loss():
            c = concat([a, b], axis=1)
            d = reshape(c, (5, 2))[1:4]
            return tsum(mul(d, d)) + mean(F.upsample1d(reshape(c, (1, 2, 5)), 2))

        assert check_gradients(loss, [a, b]).max_error < 1e-8

    def test_conv_pool_fd(self, rng):
        w, b = P(rng.standard_normal((2, 1, 3, 3))), P(rng.standard_normal(2))
        w1 = P(rng.standard_normal((3, 2, 3)))
        x = rng.standard_normal((2, 1, 6, 4))

        def loss():
            h = F.maxpool2d(relu(F.conv2d(x, w, b)))  # 2,2,3,2
            h1 = F.maxpool1d(F.conv1d(reshape(h, (2, 2, 6)), w1))
            return mean(mul(h1, h1))

        rep = check_gradients(loss, [w, b, w1])
        assert rep.max_error < 1e-6

    def test_relative_error(self):
        assert relative_error(1e-8, 2e-8) == pytest.approx(1e-8)
        assert relative_error(100.0, 101.0) == pytest.approx(1 / 101)


class TestAdam:
    def test_first_step_is_lr_sign(self):
        p = P([1.0, -2.0])
        p.grad = np.array([0.3, -5.0])
        g = p.grad.copy()
        Adam([p], AdamConfig(lr=0.1)).step()
        # bias-corrected first step: lr * g / (|g| + eps)
        assert np.allclose(p.data, [1.0, -2.0] - 0.1 * g / (np.abs(g) + 1e-8), rtol=0, atol=1e-15)

    def test_minimizes_quadratic(self):
        p = P([5.0])
        opt = Adam([p], AdamConfig(lr=0.1))
        for _ in range(500):
            opt.zero_grad()
            backward(tsum(mul(p, p)))
            opt.step()
        assert abs(p.data[0]) < 1e-2


def test_glorot_bounds(rng):
    w = glorot_uniform(rng, (30, 20), 30, 20)
    assert np.abs(w).max() <= math.sqrt(6 / 50)
