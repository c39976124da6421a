import math

import numpy as np
import pytest

from src.autodiff.errors import DegenerateBatchError, DimensionError, NonFiniteError, TapeStateError
from src.autodiff.functional import (
    ActivationKind,
    BatchNormMode,
    BatchNormState,
    ConvParams,
    activation_forward,
    batchnorm_forward,
    conv1d_forward,
    dense_forward,
    leaky_relu_forward,
    maxpool1d_forward,
)
from src.autodiff.tensor import Tape, Tensor, backward, scale, sum_all


def _loop_conv(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray, padding: int, stride: int) -> np.ndarray:
    padded = np.pad(x, ((0, 0), (0, 0), (padding, padding)))
    width = kernels.shape[2]
    out_len = (padded.shape[2] - width) // stride + 1
    out = np.zeros((x.shape[0], kernels.shape[0], out_len))
    for b in range(x.shape[0]):
        for n in range(kernels.shape[0]):
            for pos in range(out_len):
                acc = bias[n]
                for c in range(x.shape[1]):
                    for f in range(width):
                        acc += padded[b, c, pos * stride + f] * kernels[n, c, f]
                out[b, n, pos] = acc
    return out


def test_conv_identity_kernel() -> None:
    params = ConvParams(Tensor(np.array([[[0.0, 1.0, 0.0]]])), Tensor(np.zeros(1)), padding=1)
    out = conv1d_forward(Tensor(np.array([[[1.0, 2.0, 3.0, 4.0]]])), params)
    np.testing.assert_array_equal(out.values, [[[1.0, 2.0, 3.0, 4.0]]])


def test_conv_window_shape() -> None:
    rng = np.random.default_rng(0)
    params = ConvParams(Tensor(rng.normal(size=(8, 1, 3))), Tensor(np.zeros(8)), padding=1)
    out = conv1d_forward(Tensor(rng.normal(size=(5, 1, 16))), params)
    assert out.shape == (5, 8, 16)


def test_conv_matches_loop_oracle() -> None:
    rng = np.random.default_rng(1)
    for padding, stride in [(0, 1), (1, 1), (2, 2)]:
        x = rng.normal(size=(2, 3, 10))
        kernels = rng.normal(size=(4, 3, 3))
        bias = rng.normal(size=4)
        got = conv1d_forward(Tensor(x), ConvParams(Tensor(kernels), Tensor(bias), padding, stride)).values
        np.testing.assert_allclose(got, _loop_conv(x, kernels, bias, padding, stride), rtol=1e-12, atol=1e-12)


def test_conv_rejects_short_input() -> None:
    params = ConvParams(Tensor(np.ones((1, 1, 5))))
    with pytest.raises(DimensionError):
        conv1d_forward(Tensor(np.ones((1, 1, 3))), params)
    with pytest.raises(DimensionError):
        conv1d_forward(Tensor(np.ones((1, 2, 8))), params)


def test_dense_hand_arithmetic() -> None:
    out = dense_forward(Tensor([[1.0, 2.0]]), Tensor(np.eye(2)), Tensor([3.0, -3.0]))
    np.testing.assert_array_equal(out.values, [[4.0, -1.0]])


def test_dense_matches_loop_oracle() -> None:
    rng = np.random.default_rng(2)
    x, w, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 2)), rng.normal(size=2)
    expected = np.array([[sum(x[i, k] * w[k, j] for k in range(7)) + b[j] for j in range(2)] for i in range(5)])
    np.testing.assert_allclose(dense_forward(Tensor(x), Tensor(w), Tensor(b)).values, expected, rtol=1e-12)


def test_dense_rejects_mismatched_inner_dimension() -> None:
    with pytest.raises(DimensionError) as excinfo:
        dense_forward(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
    assert excinfo.value.axis == "D_in"


def test_leaky_relu_branches() -> None:
    out = leaky_relu_forward(Tensor([3.0, -1.0, 0.0]))
    np.testing.assert_allclose(out.values, [3.0, -0.2, 0.0])


def test_leaky_relu_negative_gradient() -> None:
    x = Tensor([-2.0])
    tape = Tape()
    loss = sum_all(scale(leaky_relu_forward(x, tape=tape), 5.0, tape), tape)
    backward(tape, loss)
    assert x.grad[0] == pytest.approx(0.2 * 5.0)


def test_activation_variants() -> None:
    x = Tensor([-1.0, 0.0, 2.0])
    np.testing.assert_allclose(activation_forward(x, ActivationKind.RELU).values, [0.0, 0.0, 2.0])
    np.testing.assert_allclose(activation_forward(x, ActivationKind.TANH).values, np.tanh(x.values))
    np.testing.assert_allclose(activation_forward(x, ActivationKind.SIGMOID).values, 1.0 / (1.0 + np.exp(-x.values)))


def test_batchnorm_constant_input_gives_zero() -> None:
    state = BatchNormState.fresh(2)
    out = batchnorm_forward(Tensor(np.full((4, 2, 3), 7.0)), state)
    np.testing.assert_allclose(out.values, 0.0)


def test_batchnorm_three_values() -> None:
    state = BatchNormState.fresh(1, epsilon=1e-12)
    out = batchnorm_forward(Tensor(np.array([[[1.0, 2.0, 3.0]]])), state)
    np.testing.assert_allclose(out.values[0, 0], [-1.2247, 0.0, 1.2247], atol=1e-3)


def test_batchnorm_running_mean_converges_geometrically() -> None:
    state = BatchNormState.fresh(1)
    batch = Tensor(np.array([[[1.0, 2.0, 6.0]]]))
    for k in range(1, 6):
        batchnorm_forward(batch, state)
        assert state.running_mean[0] == pytest.approx(3.0 * (1.0 - 0.9**k))


def test_batchnorm_infer_mode_uses_running_statistics() -> None:
    state = BatchNormState.fresh(1, mode=BatchNormMode.INFER)
    state.running_mean[:] = 1.0
    state.running_var[:] = 4.0
    out = batchnorm_forward(Tensor(np.array([[[3.0]]])), state)
    assert out.values[0, 0, 0] == pytest.approx(2.0 / math.sqrt(4.0 + state.epsilon))


def test_batchnorm_train_mode_rejects_single_value() -> None:
    with pytest.raises(DegenerateBatchError):
        batchnorm_forward(Tensor(np.ones((1, 2))), BatchNormState.fresh(2))


def test_maxpool_hand_values() -> None:
    out, argmax = maxpool1d_forward(Tensor(np.array([[[3.0, 1.0, 4.0, 1.0]]])))
    np.testing.assert_array_equal(out.values, [[[3.0, 4.0]]])
    np.testing.assert_array_equal(argmax, [[[0, 2]]])


def test_maxpool_twice_collapses_sixteen_to_four() -> None:
    x = Tensor(np.ones((2, 16, 16)))
    once, _ = maxpool1d_forward(x)
    twice, _ = maxpool1d_forward(once)
    assert once.shape[2] == 8
    assert twice.shape[2] == 4
    np.testing.assert_array_equal(twice.values, 1.0)


def test_backward_of_sum_is_ones() -> None:
    x = Tensor(np.arange(6.0).reshape(2, 3))
    tape = Tape()
    backward(tape, sum_all(x, tape))
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_tape_cannot_be_replayed() -> None:
    x = Tensor([1.0, 2.0])
    tape = Tape()
    loss = sum_all(x, tape)
    backward(tape, loss)
    with pytest.raises(TapeStateError):
        backward(tape, loss)
    with pytest.raises(TapeStateError):
        backward(Tape(), loss)


def test_non_finite_forward_is_reported() -> None:
    tape = Tape()
    with pytest.raises(NonFiniteError) as excinfo:
        scale(Tensor([1e308]), 1e10, tape)
    assert excinfo.value.op == "scale"
