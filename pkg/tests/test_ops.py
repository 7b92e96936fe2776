"""Kernel tests. Every frozen expected value below was computed with the
plain-loop oracles in this file (or by hand from the defining formula)
before the kernels existed."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import route_error
from lusnet import ops
from lusnet.errors import ShapeError
from lusnet.tensor import ConvParams, DenseParams, Mode, PoolParams, tensor


def conv_oracle(x, kernels, bias):
    """7-deep loop convolution: Same zero padding, stride 1, float64."""
    h, w, c_in = x.shape
    k, _, _, c_out = kernels.shape
    p = k // 2
    out = np.zeros((h, w, c_out))
    for oh in range(h):
        for ow in range(w):
            for o in range(c_out):
                acc = float(bias[o])
                for dh in range(k):
                    for dw in range(k):
                        ih, iw = oh + dh - p, ow + dw - p
                        if 0 <= ih < h and 0 <= iw < w:
                            for i in range(c_in):
                                acc += float(x[ih, iw, i]) * float(kernels[dh, dw, i, o])
                out[oh, ow, o] = acc
    return out


def pool_oracle(x):
    """Brute-force 2x2 window max with floor semantics."""
    h2, w2, c = x.shape[0] // 2, x.shape[1] // 2, x.shape[2]
    out = np.zeros((h2, w2, c), dtype=x.dtype)
    for oh in range(h2):
        for ow in range(w2):
            for ch in range(c):
                out[oh, ow, ch] = max(
                    x[2 * oh, 2 * ow, ch],
                    x[2 * oh, 2 * ow + 1, ch],
                    x[2 * oh + 1, 2 * ow, ch],
                    x[2 * oh + 1, 2 * ow + 1, ch],
                )
    return out


@pytest.mark.parametrize("mode", [Mode.REFERENCE, Mode.FAST])
class TestConv2d:
    def test_all_ones_kernel_frozen_values(self, mode):
        x = tensor([[1, 2, 3], [4, 5, 6], [7, 8, 9]], (3, 3, 1))
        params = ConvParams(np.ones((3, 3, 1, 1), np.float32), np.zeros(1, np.float32))
        expected = [[12, 21, 16], [27, 45, 33], [24, 39, 28]]
        np.testing.assert_array_equal(ops.conv2d(x, params, mode)[:, :, 0], expected)

    def test_identity_kernel_returns_input(self, mode):
        rng = np.random.default_rng(3)
        x = rng.random((5, 6, 2), dtype=np.float32)
        kernels = np.zeros((3, 3, 2, 2), np.float32)
        kernels[1, 1, 0, 0] = 1.0
        kernels[1, 1, 1, 1] = 1.0
        params = ConvParams(kernels, np.zeros(2, np.float32))
        np.testing.assert_array_equal(ops.conv2d(x, params, mode), x)

    def test_zero_input_isolates_bias(self, mode):
        rng = np.random.default_rng(4)
        params = ConvParams(
            rng.standard_normal((3, 3, 1, 5)).astype(np.float32),
            rng.standard_normal(5).astype(np.float32),
        )
        out = ops.conv2d(np.zeros((150, 150, 1), np.float32), params, mode)
        for o in range(5):
            np.testing.assert_allclose(out[:, :, o], params.bias[o], rtol=0, atol=0)

    def test_matches_seven_loop_oracle(self, mode):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((4, 5, 3)).astype(np.float32)
        params = ConvParams(
            rng.standard_normal((3, 3, 3, 2)).astype(np.float32),
            rng.standard_normal(2).astype(np.float32),
        )
        expected = conv_oracle(x, params.kernels, params.bias)
        np.testing.assert_allclose(ops.conv2d(x, params, mode), expected, atol=1e-5)

    def test_preserves_spatial_dims(self, mode):
        params = ConvParams(np.ones((3, 3, 1, 1), np.float32), np.zeros(1, np.float32))
        for h, w in [(1, 1), (1, 7), (3, 2), (13, 4)]:
            assert ops.conv2d(np.ones((h, w, 1), np.float32), params, mode).shape == (h, w, 1)

    def test_rejects_channel_mismatch(self, mode):
        params = ConvParams(np.ones((3, 3, 2, 1), np.float32), np.zeros(1, np.float32))
        with pytest.raises(ShapeError):
            ops.conv2d(np.ones((4, 4, 3), np.float32), params, mode)


def test_conv2d_rejects_unsupported_stride_and_padding():
    from lusnet.tensor import Padding

    x = np.ones((4, 4, 1), np.float32)
    with pytest.raises(ShapeError):
        ops.conv2d(x, ConvParams(np.ones((3, 3, 1, 1), np.float32), np.zeros(1, np.float32), stride=2))
    with pytest.raises(ShapeError):
        ops.conv2d(
            x,
            ConvParams(
                np.ones((3, 3, 1, 1), np.float32), np.zeros(1, np.float32), padding=Padding.VALID
            ),
        )


def test_conv_routes_agree_on_200_random_cases():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(200):
        h, w = rng.integers(1, 13, size=2)
        c_in, c_out = rng.integers(1, 9, size=2)
        x = rng.standard_normal((h, w, c_in)).astype(np.float32)
        params = ConvParams(
            rng.standard_normal((3, 3, c_in, c_out)).astype(np.float32),
            rng.standard_normal(c_out).astype(np.float32),
        )
        worst = max(
            worst,
            route_error(
                ops.conv2d(x, params, Mode.REFERENCE), ops.conv2d(x, params, Mode.FAST)
            ),
        )
    assert worst < 1e-5


def test_conv_is_deterministic_per_mode():
    rng = np.random.default_rng(12)
    x = rng.standard_normal((9, 9, 4)).astype(np.float32)
    params = ConvParams(
        rng.standard_normal((3, 3, 4, 8)).astype(np.float32),
        rng.standard_normal(8).astype(np.float32),
    )
    for mode in Mode:
        a = ops.conv2d(x, params, mode)
        b = ops.conv2d(x, params, mode)
        assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("mode", [Mode.REFERENCE, Mode.FAST])
class TestMaxPool:
    def test_five_by_five_frozen_values(self, mode):
        x = tensor(np.arange(1, 26), (5, 5, 1))
        out = ops.maxpool2d(x, PoolParams(), mode)
        np.testing.assert_array_equal(out[:, :, 0], [[7, 9], [17, 19]])

    def test_output_dims_floor(self, mode):
        for h, w, c in [(150, 150, 64), (5, 4, 2), (2, 2, 1), (7, 9, 3)]:
            out = ops.maxpool2d(np.ones((h, w, c), np.float32), PoolParams(), mode)
            assert out.shape == (h // 2, w // 2, c)

    def test_constant_input_constant_output(self, mode):
        out = ops.maxpool2d(np.full((5, 7, 2), 0.25, np.float32), PoolParams(), mode)
        assert out.shape == (2, 3, 2)
        assert np.all(out == 0.25)

    def test_matches_window_oracle(self, mode):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((7, 6, 3)).astype(np.float32)
        np.testing.assert_array_equal(ops.maxpool2d(x, PoolParams(), mode), pool_oracle(x))

    def test_rejects_subwindow_input(self, mode):
        with pytest.raises(ShapeError):
            ops.maxpool2d(np.ones((1, 5, 1), np.float32), PoolParams(), mode)


def test_pool_routes_agree_on_200_random_cases():
    rng = np.random.default_rng(13)
    for _ in range(200):
        h, w = rng.integers(2, 15, size=2)
        c = int(rng.integers(1, 9))
        x = rng.standard_normal((h, w, c)).astype(np.float32)
        a = ops.maxpool2d(x, PoolParams(), Mode.REFERENCE)
        b = ops.maxpool2d(x, PoolParams(), Mode.FAST)
        assert a.tobytes() == b.tobytes()


def test_paper_pooling_sequence_150_to_4():
    sizes = [150]
    x = np.zeros((150, 150, 1), np.float32)
    for _ in range(5):
        x = ops.maxpool2d(x, PoolParams())
        sizes.append(x.shape[0])
    assert sizes == [150, 75, 37, 18, 9, 4]


class TestRelu:
    def test_sign_definition(self):
        np.testing.assert_array_equal(ops.relu(tensor([-1, 0, 2])), [0, 0, 2])

    def test_identity_on_nonnegatives(self):
        x = tensor([0.0, 0.5, 3.0])
        np.testing.assert_array_equal(ops.relu(x), x)

    def test_idempotent(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((4, 4, 2)).astype(np.float32)
        once = ops.relu(x)
        np.testing.assert_array_equal(ops.relu(once), once)


class TestFlatten:
    def test_8192_from_4x4x512(self):
        assert ops.flatten(np.zeros((4, 4, 512), np.float32)).shape == (8192,)

    def test_singleton(self):
        np.testing.assert_array_equal(ops.flatten(tensor([3.0], (1, 1, 1))), [3.0])

    def test_index_formula_order(self):
        a, b, c, d = 1.0, 2.0, 3.0, 4.0
        x = tensor([a, b, c, d], (2, 1, 2))
        np.testing.assert_array_equal(ops.flatten(x), [a, b, c, d])

    def test_roundtrip_through_reshape(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((3, 5, 2)).astype(np.float32)
        flat = ops.flatten(x)
        assert flat.size == x.size
        np.testing.assert_array_equal(flat.reshape(x.shape), x)


class TestDense:
    def test_identity_weights(self):
        params = DenseParams(np.eye(3, dtype=np.float32), np.zeros(3, np.float32))
        x = tensor([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(ops.dense(x, params), x)

    def test_zero_input_gives_bias(self):
        params = DenseParams(np.ones((4, 2), np.float32), tensor([5.0, 6.0]))
        np.testing.assert_array_equal(ops.dense(np.zeros(4, np.float32), params), [5.0, 6.0])

    def test_hand_matrix_vector(self):
        params = DenseParams(np.eye(2, dtype=np.float32), tensor([10.0, 20.0]))
        np.testing.assert_array_equal(ops.dense(tensor([1.0, 2.0]), params), [11.0, 22.0])

    def test_rejects_length_mismatch(self):
        params = DenseParams(np.ones((4, 2), np.float32), np.zeros(2, np.float32))
        with pytest.raises(ShapeError):
            ops.dense(np.ones(5, np.float32), params)


class TestSoftmax:
    def test_equal_logits_half_half(self):
        for c in [-3.0, 0.0, 7.5]:
            np.testing.assert_allclose(ops.softmax(tensor([c, c])), [0.5, 0.5], atol=1e-7)

    def test_zero_and_ln3(self):
        np.testing.assert_allclose(
            ops.softmax(tensor([0.0, np.log(3.0)])), [0.25, 0.75], atol=1e-6
        )

    def test_one_two_frozen(self):
        np.testing.assert_allclose(
            ops.softmax(tensor([1.0, 2.0])), [0.26894, 0.73106], atol=1e-4
        )

    def test_rejects_nan(self):
        with pytest.raises(ShapeError):
            ops.softmax(np.array([np.nan, 0.0], np.float32))

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=8), st.floats(-50, 50))
    @settings(max_examples=100, deadline=None)
    def test_sums_to_one_and_shift_invariant(self, logits, shift):
        x = np.array(logits, np.float64)
        p = ops.softmax(x)
        assert abs(p.sum() - 1.0) < 1e-6
        assert np.all(p > 0) and np.all(p <= 1.0)
        np.testing.assert_allclose(ops.softmax(x + shift), p, atol=1e-6)
