import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mmfuse import tensor as T
from mmfuse.errors import ContractError, DimensionError
from mmfuse.gradcheck import gradcheck, gradcheck_report
from mmfuse.tensor import Tensor


def leaf(x):
    return Tensor(x, requires_grad=True)


# ------------------------------------------------------------------ matmul


def test_matmul_identity():
    b = Tensor([[3, 4], [5, 6]])
    np.testing.assert_array_equal(T.matmul(Tensor(np.eye(2)), b).data, [[3, 4], [5, 6]])


def test_matmul_hand_computed():
    # 1*5 + 2*6 = 17, 3*5 + 4*6 = 39
    out = T.matmul(Tensor([[1, 2], [3, 4]]), Tensor([[5], [6]]))
    np.testing.assert_array_equal(out.data, [[17], [39]])


def test_matmul_zero_annihilates():
    out = T.matmul(Tensor(np.zeros((3, 2))), Tensor(np.random.default_rng(0).normal(size=(2, 4))))
    assert not out.data.any()


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\[2, 3\].*\[2, 3\]"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


@pytest.mark.parametrize("seed", range(5))
def test_matmul_associative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (Tensor(rng.normal(size=s)) for s in [(3, 4), (4, 5), (5, 2)])
    left = T.matmul(T.matmul(a, b), c).data
    right = T.matmul(a, T.matmul(b, c)).data
    np.testing.assert_allclose(left, right, rtol=1e-4, atol=1e-5)


# ----------------------------------------------------------------- softmax


def test_softmax_uniform_row():
    np.testing.assert_allclose(T.softmax_rows(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])


def test_softmax_ln2():
    out = T.softmax_rows(Tensor([[math.log(2.0), 0.0]])).data
    np.testing.assert_allclose(out, [[2 / 3, 1 / 3]], rtol=1e-6)


def test_softmax_large_logit_stable():
    out = T.softmax_rows(Tensor([[1000.0, 0.0]])).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [[1.0, 0.0]], atol=1e-7)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 8)), elements=st.floats(-1e3, 1e3)))
def test_softmax_rows_sum_to_one(x):
    out = T.softmax_rows(Tensor(x)).data
    assert np.all(out >= 0)
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)


# -------------------------------------------------------------- elementwise


def test_add_zero_identity():
    x = Tensor([[1.5, -2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(T.elementwise("add", x, Tensor(0.0)).data, x.data)


def test_relu_definition():
    np.testing.assert_array_equal(T.elementwise("relu", Tensor([-1.0, 2.0])).data, [0.0, 2.0])


def test_gelu_zero_fixed_point():
    assert T.elementwise("gelu", Tensor([0.0])).data[0] == 0.0


def test_gelu_tanh_form():
    x = 1.3
    expected = 0.5 * x * (1 + math.tanh(math.sqrt(2 / math.pi) * (x + 0.044715 * x**3)))
    assert T.gelu(Tensor([x])).data[0] == pytest.approx(expected, rel=1e-6)


def test_elementwise_shape_error():
    with pytest.raises(DimensionError):
        T.elementwise("add", Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
    with pytest.raises(DimensionError):
        T.mul(Tensor(np.ones(3)), Tensor(np.ones(2)))


def test_elementwise_scalar_broadcast():
    out = T.mul(Tensor(np.ones((2, 2))), Tensor(3.0))
    np.testing.assert_array_equal(out.data, np.full((2, 2), 3.0))


# --------------------------------------------------------------- layer norm


def test_layer_norm_constant_row_gives_bias():
    out = T.layer_norm(Tensor([[2.0, 2.0, 2.0]]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
    np.testing.assert_array_equal(out.data, np.zeros((1, 3)))


def test_layer_norm_two_values():
    out = T.layer_norm(Tensor([[1.0, -1.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)))
    expected = 1.0 / math.sqrt(1.0 + 1e-5)
    np.testing.assert_allclose(out.data, [[expected, -expected]], rtol=1e-6)


def test_layer_norm_zero_gain_is_bias():
    bias = np.array([0.5, -0.25, 2.0])
    out = T.layer_norm(Tensor([[1.0, 7.0, -3.0]]), Tensor(np.zeros(3)), Tensor(bias))
    np.testing.assert_allclose(out.data, [bias], rtol=1e-7)


# ------------------------------------------------------------ cross entropy


def test_cross_entropy_uniform():
    assert T.cross_entropy(Tensor([0.0, 0.0]), 0).item() == pytest.approx(math.log(2), rel=1e-6)


def test_cross_entropy_confident():
    assert T.cross_entropy(Tensor([10.0, -10.0]), 0).item() == pytest.approx(0.0, abs=1e-7)


def test_cross_entropy_direct_formula():
    # -log(e^3 / (e^1 + e^2 + e^3)) evaluated directly
    expected = -math.log(math.exp(3) / (math.exp(1) + math.exp(2) + math.exp(3)))
    assert expected == pytest.approx(0.4076, abs=1e-4)
    assert T.cross_entropy(Tensor([1.0, 2.0, 3.0]), 2).item() == pytest.approx(expected, rel=1e-6)


def test_cross_entropy_label_out_of_range():
    with pytest.raises(IndexError):
        T.cross_entropy(Tensor([1.0, 2.0]), 2)


# ----------------------------------------------------------------- backward


def test_backward_sum_gives_ones():
    x = leaf(np.arange(6.0).reshape(2, 3))
    T.backward(T.sum_all(x))
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_backward_square_gives_2x():
    x = leaf([1.5, -2.0, 0.25])
    T.backward(T.sum_all(T.mul(x, x)))
    np.testing.assert_allclose(x.grad, 2 * x.data)


def test_backward_accumulates_over_shared_paths():
    x = leaf([2.0])
    y = T.add(T.mul(x, Tensor(3.0)), T.mul(x, x))  # 3x + x^2
    T.backward(T.sum_all(y))
    assert x.grad[0] == pytest.approx(3 + 2 * 2.0)


def test_backward_rejects_non_scalar():
    with pytest.raises(ContractError):
        T.backward(T.mul(leaf([1.0, 2.0]), Tensor(2.0)))


def test_no_grad_builds_no_graph():
    x = leaf([1.0, 2.0])
    with T.no_grad():
        y = T.mul(x, x)
    assert not y.requires_grad and y._parents == ()


# ---------------------------------------------------------------- gradcheck


def test_gradcheck_linear_exact():
    w = leaf([[0.5, -1.0], [2.0, 0.25]])
    x = Tensor([[1.0, 2.0]])
    assert gradcheck(lambda: T.sum_all(T.matmul(x, w)), [w]) < 1e-8


def test_gradcheck_softmax_ce():
    rng = np.random.default_rng(3)
    z = leaf(rng.normal(size=(4, 5)))
    w = leaf(rng.normal(size=(5, 3)))
    f = lambda: T.cross_entropy(T.matmul(T.softmax_rows(z), w), [0, 2, 1, 1])
    assert gradcheck(f, [z, w]) < 1e-4


def test_gradcheck_restores_float32_data():
    w = leaf(np.ones((2, 2)))
    gradcheck(lambda: T.sum_all(T.mul(w, w)), [w])
    assert w.data.dtype == np.float32 and w.grad is None


def _unary_case(name, rng):
    x = leaf(rng.normal(size=(3, 4)))
    if name == "relu":
        # keep away from the kink so central differences are valid
        x.data = np.where(np.abs(x.data) < 0.05, 0.3, x.data).astype(np.float32)
    fn = {"relu": T.relu, "gelu": T.gelu, "softmax": T.softmax_rows, "transpose": T.transpose}[name]
    r = Tensor(rng.normal(size=fn(x).shape))
    return (lambda: T.sum_all(T.mul(fn(x), r))), [x]


def _binary_case(name, rng):
    if name == "matmul":
        a, b = leaf(rng.normal(size=(2, 3, 4))), leaf(rng.normal(size=(4, 5)))
        out = lambda: T.matmul(a, b)
    elif name == "batched_matmul":
        a, b = leaf(rng.normal(size=(2, 3, 4))), leaf(rng.normal(size=(2, 4, 2)))
        out = lambda: T.matmul(a, b)
    elif name == "add":
        a, b = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=(3, 4)))
        out = lambda: T.add(a, b)
    elif name == "mul":
        a, b = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=()))
        out = lambda: T.mul(a, b)
    elif name == "add_bias":
        a, b = leaf(rng.normal(size=(2, 3, 4))), leaf(rng.normal(size=(4,)))
        out = lambda: T.add_bias(a, b)
    elif name == "concat":
        a, b = leaf(rng.normal(size=(2, 3, 4))), leaf(rng.normal(size=(2, 5, 4)))
        out = lambda: T.concat([a, b], axis=-2)
    r = Tensor(rng.normal(size=out().shape))
    return (lambda: T.sum_all(T.mul(out(), r))), [a, b]


UNARY = ["relu", "gelu", "softmax", "transpose"]
BINARY = ["matmul", "batched_matmul", "add", "mul", "add_bias", "concat"]


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("name", UNARY + BINARY)
def test_op_gradients_match_central_differences(name, seed):
    rng = np.random.default_rng(seed)
    f, params = (_unary_case if name in UNARY else _binary_case)(name, rng)
    assert gradcheck(f, params) < 1e-3


@pytest.mark.parametrize("seed", range(10))
def test_structured_op_gradients(seed):
    rng = np.random.default_rng(100 + seed)
    x = leaf(rng.normal(size=(2, 5, 5, 3)))
    k = leaf(rng.normal(size=(3, 3, 3)))
    b = leaf(rng.normal(size=(3,)))
    g = leaf(rng.normal(size=(3,)) + 1.0)
    be = leaf(rng.normal(size=(3,)))
    r = Tensor(rng.normal(size=(25, 2, 3)))
    labels = rng.integers(0, 3, size=2)

    def f():
        y = T.layer_norm(T.depthwise_conv2d(x, k, b), g, be)
        y = T.permute(T.reshape(y, (2, 25, 3)), (1, 0, 2))
        logits = T.mean(y, axis=0)
        return T.add(T.cross_entropy(logits, labels), T.sum_all(T.mul(y, r)))

    assert gradcheck(f, [x, k, b, g, be]) < 1e-3


def test_gradcheck_report_names_worst_parameter():
    a = Tensor([1.0, 2.0], requires_grad=True, name="a")
    report = gradcheck_report(lambda: T.sum_all(T.mul(a, a)), [a])
    assert report.worst == "a" and report.passed(1e-3)


def test_forward_outputs_finite_on_finite_inputs():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(4, 6)) * 100)
    for out in (T.softmax_rows(x), T.gelu(x), T.layer_norm(x, Tensor(np.ones(6)), Tensor(np.zeros(6)))):
        assert np.all(np.isfinite(out.data))


def test_determinism_bit_identical():
    def run():
        rng = np.random.default_rng(42)
        a, b = Tensor(rng.normal(size=(8, 8))), Tensor(rng.normal(size=(8, 8)))
        return T.layer_norm(T.gelu(T.matmul(a, b)), Tensor(np.ones(8)), Tensor(np.zeros(8))).data

    assert run().tobytes() == run().tobytes()


def test_precision_context():
    with T.precision(np.float64):
        assert Tensor([1.0]).data.dtype == np.float64
    assert Tensor([1.0]).data.dtype == np.float32
