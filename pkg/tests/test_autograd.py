"""Forward-pass correctness of the tensor ops against brute-force oracles."""

import numpy as np
import numpy.testing as npt
import pytest

from lesionfuse.autograd import (
    Tensor,
    activate,
    add,
    concat_channels,
    conv2d,
    dense,
    flatten,
    global_maxpool,
    maxpool2d,
    mul,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    tensor_sum,
    zero_pad2d,
)


def conv2d_oracle(x, k, b, stride, pad_h, pad_w):
    """Direct six-nested-loop cross-correlation, float64 accumulate."""
    n, c, h, w = x.shape
    f, _, kh, kw = k.shape
    xp = np.zeros((n, c, h + 2 * pad_h, w + 2 * pad_w))
    xp[:, :, pad_h : pad_h + h, pad_w : pad_w + w] = x
    oh = (h + 2 * pad_h - kh) // stride + 1
    ow = (w + 2 * pad_w - kw) // stride + 1
    out = np.zeros((n, f, oh, ow))
    for ni in range(n):
        for fi in range(f):
            for oi in range(oh):
                for oj in range(ow):
                    acc = 0.0
                    for ci in range(c):
                        for ki in range(kh):
                            for kj in range(kw):
                                acc += (
                                    xp[ni, ci, oi * stride + ki, oj * stride + kj]
                                    * k[fi, ci, ki, kj]
                                )
                    out[ni, fi, oi, oj] = acc + b[fi]
    return out


def maxpool_oracle(x, window, stride):
    """Brute-force window scan."""
    n, c, h, w = x.shape
    oh = (h - window) // stride + 1
    ow = (w - window) // stride + 1
    out = np.zeros((n, c, oh, ow), dtype=x.dtype)
    for oi in range(oh):
        for oj in range(ow):
            patch = x[:, :, oi * stride : oi * stride + window, oj * stride : oj * stride + window]
            out[:, :, oi, oj] = patch.max(axis=(2, 3))
    return out


def dense_oracle(x, w, b):
    """Triple-loop matmul."""
    n, d = x.shape
    _, k = w.shape
    out = np.zeros((n, k))
    for ni in range(n):
        for ki in range(k):
            acc = 0.0
            for di in range(d):
                acc += x[ni, di] * w[di, ki]
            out[ni, ki] = acc + b[ki]
    return out


class TestConv2d:
    def test_matches_oracle_random_configs(self):
        """conv2d forward agrees with the six-loop reference over random shapes."""
        rng = np.random.default_rng(42)
        for _ in range(20):
            n = int(rng.integers(1, 4))
            c = int(rng.integers(1, 4))
            f = int(rng.integers(1, 5))
            kh = int(rng.integers(1, 4))
            kw = int(rng.integers(1, 4))
            stride = int(rng.integers(1, 3))
            pad = int(rng.integers(0, 3))
            h = int(rng.integers(kh, kh + 5))
            w = int(rng.integers(kw, kw + 5))
            x = rng.standard_normal((n, c, h, w)).astype(np.float32)
            k = rng.standard_normal((f, c, kh, kw)).astype(np.float32)
            b = rng.standard_normal(f).astype(np.float32)
            got = conv2d(Tensor(x), Tensor(k), Tensor(b), stride=stride, padding=pad)
            want = conv2d_oracle(x, k, b, stride, pad, pad)
            assert got.data.shape == want.shape
            npt.assert_allclose(got.data, want, rtol=1e-5, atol=1e-5)

    def test_asymmetric_padding(self):
        """Tuple padding pads height and width independently."""
        rng = np.random.default_rng(7)
        x = rng.standard_normal((2, 3, 5, 6)).astype(np.float32)
        k = rng.standard_normal((4, 3, 1, 3)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        got = conv2d(Tensor(x), Tensor(k), Tensor(b), stride=1, padding=(0, 1))
        want = conv2d_oracle(x, k, b, 1, 0, 1)
        assert got.data.shape == (2, 4, 5, 6)
        npt.assert_allclose(got.data, want, rtol=1e-5, atol=1e-5)

    def test_same_padding_preserves_shape(self):
        x = Tensor(np.ones((1, 1, 8, 8), dtype=np.float32))
        k = Tensor(np.ones((2, 1, 3, 3), dtype=np.float32))
        b = Tensor(np.zeros(2, dtype=np.float32))
        out = conv2d(x, k, b, stride=1, padding=1)
        assert out.data.shape == (1, 2, 8, 8)

    def test_channel_mismatch_raises(self):
        x = Tensor(np.zeros((1, 3, 4, 4), dtype=np.float32))
        k = Tensor(np.zeros((2, 4, 3, 3), dtype=np.float32))
        b = Tensor(np.zeros(2, dtype=np.float32))
        with pytest.raises(ValueError, match="channels"):
            conv2d(x, k, b)

    def test_kernel_larger_than_input_raises(self):
        x = Tensor(np.zeros((1, 1, 2, 2), dtype=np.float32))
        k = Tensor(np.zeros((1, 1, 5, 5), dtype=np.float32))
        b = Tensor(np.zeros(1, dtype=np.float32))
        with pytest.raises(ValueError, match="exceeds"):
            conv2d(x, k, b)

    def test_bias_shape_checked(self):
        x = Tensor(np.zeros((1, 1, 4, 4), dtype=np.float32))
        k = Tensor(np.zeros((2, 1, 3, 3), dtype=np.float32))
        b = Tensor(np.zeros(3, dtype=np.float32))
        with pytest.raises(ValueError, match="bias"):
            conv2d(x, k, b)


class TestPooling:
    def test_maxpool_matches_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            n = int(rng.integers(1, 3))
            c = int(rng.integers(1, 4))
            window = int(rng.integers(1, 4))
            stride = int(rng.integers(1, 4))
            h = int(rng.integers(window, window + 6))
            w = int(rng.integers(window, window + 6))
            x = rng.standard_normal((n, c, h, w)).astype(np.float32)
            got = maxpool2d(Tensor(x), window, stride)
            npt.assert_array_equal(got.data, maxpool_oracle(x, window, stride))

    def test_maxpool_tie_gradient_goes_to_first(self):
        """With equal values in a window, only the row-major-first one gets gradient."""
        x = Tensor(np.full((1, 1, 2, 2), 3.0, dtype=np.float32))
        out = maxpool2d(x, 2, 2)
        tensor_sum(out).backward()
        npt.assert_array_equal(
            x.grad[0, 0], np.array([[1.0, 0.0], [0.0, 0.0]], dtype=np.float32)
        )

    def test_maxpool_overlapping_windows_accumulate(self):
        """A maximum shared by two windows receives gradient from both."""
        data = np.array([[0.0, 9.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]], dtype=np.float32)
        x = Tensor(data[None, None])
        out = maxpool2d(x, 2, 1)  # 2x2 output; the 9 dominates the two top windows
        tensor_sum(out).backward()
        assert x.grad[0, 0, 0, 1] == 2.0

    def test_maxpool_window_too_large_raises(self):
        with pytest.raises(ValueError, match="exceeds"):
            maxpool2d(Tensor(np.zeros((1, 1, 2, 2), dtype=np.float32)), 3, 1)

    def test_global_maxpool(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((3, 4, 5, 6)).astype(np.float32)
        got = global_maxpool(Tensor(x))
        npt.assert_array_equal(got.data, x.max(axis=(2, 3)))

    def test_global_maxpool_gradient_single_location(self):
        x = Tensor(np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4))
        out = global_maxpool(x)
        tensor_sum(out).backward()
        assert x.grad.sum() == 1.0
        assert x.grad[0, 0, 3, 3] == 1.0


class TestDense:
    def test_matches_oracle(self):
        rng = np.random.default_rng(99)
        for _ in range(10):
            n = int(rng.integers(1, 5))
            d = int(rng.integers(1, 8))
            k = int(rng.integers(1, 6))
            x = rng.standard_normal((n, d)).astype(np.float32)
            w = rng.standard_normal((d, k)).astype(np.float32)
            b = rng.standard_normal(k).astype(np.float32)
            got = dense(Tensor(x), Tensor(w), Tensor(b))
            npt.assert_allclose(got.data, dense_oracle(x, w, b), rtol=1e-5, atol=1e-5)

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ValueError, match="features"):
            dense(
                Tensor(np.zeros((2, 3), dtype=np.float32)),
                Tensor(np.zeros((4, 5), dtype=np.float32)),
                Tensor(np.zeros(5, dtype=np.float32)),
            )


class TestActivations:
    def test_relu(self):
        x = Tensor(np.array([-2.0, -0.5, 0.0, 0.5, 2.0], dtype=np.float32))
        npt.assert_array_equal(relu(x).data, [0.0, 0.0, 0.0, 0.5, 2.0])

    def test_sigmoid_range_and_symmetry(self):
        x = np.linspace(-10, 10, 101).astype(np.float32)
        s = sigmoid(Tensor(x)).data
        assert np.all((s > 0) & (s < 1))
        npt.assert_allclose(s + s[::-1], 1.0, atol=1e-6)
        npt.assert_allclose(sigmoid(Tensor(np.zeros(1, dtype=np.float32))).data, 0.5)

    def test_sigmoid_extreme_inputs_stay_finite(self):
        s = sigmoid(Tensor(np.array([-1e4, 1e4], dtype=np.float32))).data
        assert np.all(np.isfinite(s))
        npt.assert_allclose(s, [0.0, 1.0], atol=1e-6)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(21)
        x = rng.standard_normal((4, 7)).astype(np.float32)
        s = softmax(Tensor(x)).data
        npt.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-6)
        npt.assert_array_equal(s.argmax(axis=-1), x.argmax(axis=-1))

    def test_softmax_large_logits_no_overflow(self):
        s = softmax(Tensor(np.array([[1000.0, 1000.0]], dtype=np.float32))).data
        npt.assert_allclose(s, [[0.5, 0.5]])

    def test_activate_dispatch_and_unknown(self):
        x = Tensor(np.array([1.0], dtype=np.float32))
        npt.assert_array_equal(activate(x, "relu").data, relu(x).data)
        with pytest.raises(ValueError, match="unknown activation"):
            activate(x, "gelu")


class TestShapeOps:
    def test_concat_channels_order_and_slices(self):
        rng = np.random.default_rng(3)
        parts = [rng.standard_normal((2, c, 3, 3)).astype(np.float32) for c in (1, 4, 2)]
        out = concat_channels([Tensor(p) for p in parts])
        assert out.data.shape == (2, 7, 3, 3)
        npt.assert_array_equal(out.data[:, 0:1], parts[0])
        npt.assert_array_equal(out.data[:, 1:5], parts[1])
        npt.assert_array_equal(out.data[:, 5:7], parts[2])

    def test_concat_channels_mismatch_names_offender(self):
        a = Tensor(np.zeros((1, 2, 3, 3), dtype=np.float32))
        b = Tensor(np.zeros((1, 2, 4, 3), dtype=np.float32))
        with pytest.raises(ValueError, match="input 1"):
            concat_channels([a, b])

    def test_concat_gradient_splits_back(self):
        a = Tensor(np.ones((1, 2, 2, 2), dtype=np.float32))
        b = Tensor(np.ones((1, 3, 2, 2), dtype=np.float32))
        out = concat_channels([a, b])
        tensor_sum(scale(out, 2.0)).backward()
        npt.assert_array_equal(a.grad, np.full(a.shape, 2.0, dtype=np.float32))
        npt.assert_array_equal(b.grad, np.full(b.shape, 2.0, dtype=np.float32))

    def test_zero_pad2d(self):
        x = Tensor(np.ones((1, 1, 2, 2), dtype=np.float32))
        out = zero_pad2d(x, 1, 2)
        assert out.data.shape == (1, 1, 4, 6)
        assert out.data.sum() == 4.0
        npt.assert_array_equal(out.data[0, 0, 1:3, 2:4], np.ones((2, 2)))

    def test_flatten_row_major(self):
        x = Tensor(np.arange(24, dtype=np.float32).reshape(2, 3, 2, 2))
        out = flatten(x)
        assert out.data.shape == (2, 12)
        npt.assert_array_equal(out.data[0], np.arange(12, dtype=np.float32))

    def test_reshape_round_trip_gradient(self):
        x = Tensor(np.arange(6, dtype=np.float32).reshape(2, 3))
        out = reshape(x, (6,))
        npt.assert_array_equal(out.data, np.arange(6, dtype=np.float32))
        tensor_sum(mul(out, Tensor(np.arange(6, dtype=np.float32)))).backward()
        npt.assert_array_equal(x.grad, np.arange(6, dtype=np.float32).reshape(2, 3))

    def test_reshape_bad_size_raises(self):
        with pytest.raises(ValueError, match="reshape"):
            reshape(Tensor(np.zeros(5, dtype=np.float32)), (2, 3))


class TestArithmetic:
    def test_add_mul_scale_sum(self):
        a = Tensor(np.array([1.0, 2.0], dtype=np.float32))
        b = Tensor(np.array([3.0, 4.0], dtype=np.float32))
        npt.assert_array_equal(add(a, b).data, [4.0, 6.0])
        npt.assert_array_equal(mul(a, b).data, [3.0, 8.0])
        npt.assert_array_equal(scale(a, -2.0).data, [-2.0, -4.0])
        assert tensor_sum(b).data == 7.0

    def test_shape_mismatch_raises(self):
        a = Tensor(np.zeros(2, dtype=np.float32))
        b = Tensor(np.zeros(3, dtype=np.float32))
        with pytest.raises(ValueError):
            add(a, b)
        with pytest.raises(ValueError):
            mul(a, b)


class TestBackwardMechanics:
    def test_backward_requires_scalar(self):
        x = Tensor(np.zeros((2, 2), dtype=np.float32))
        with pytest.raises(ValueError, match="scalar"):
            x.backward()

    def test_gradients_accumulate_on_reuse(self):
        """A tensor feeding two branches receives the sum of both gradients."""
        x = Tensor(np.array([2.0], dtype=np.float32))
        y = add(scale(x, 3.0), mul(x, x))  # 3x + x^2, dy/dx = 3 + 2x = 7
        tensor_sum(y).backward()
        npt.assert_allclose(x.grad, [7.0])

    def test_zero_grad_resets(self):
        x = Tensor(np.array([1.0], dtype=np.float32))
        tensor_sum(scale(x, 5.0)).backward()
        assert x.grad[0] == 5.0
        x.zero_grad()
        assert x.grad[0] == 0.0

    def test_deep_chain_no_recursion_limit(self):
        """A graph deeper than the interpreter recursion limit still backprops."""
        x = Tensor(np.array([1.0], dtype=np.float32))
        y = x
        for _ in range(5000):
            y = scale(y, 1.0)
        tensor_sum(y).backward()
        assert x.grad[0] == 1.0

    def test_diamond_graph_visits_each_node_once(self):
        x = Tensor(np.array([3.0], dtype=np.float32))
        a = scale(x, 2.0)
        b = add(a, a)  # 4x; a is consumed twice
        tensor_sum(b).backward()
        npt.assert_allclose(x.grad, [4.0])

    def test_nonfinite_forward_raises(self):
        big = Tensor(np.array([3e38], dtype=np.float32))
        with np.errstate(over="ignore"), pytest.raises(FloatingPointError):
            add(big, big)

    def test_float32_throughout(self):
        x = Tensor(np.array([1.0], dtype=np.float64))
        assert x.data.dtype == np.float32
        out = scale(x, 2.0)
        assert out.data.dtype == np.float32
        tensor_sum(out).backward()
        assert x.grad.dtype == np.float32
