import io

import numpy as np
import pytest

from errors import NonFiniteValue, NonScalarLoss, ShapeMismatch
from tensor_kernel import (
    Parameter,
    Tensor,
    add,
    backward,
    concat,
    eye,
    finite_difference_check,
    getitem,
    inv_sqrt_safe,
    load_tensors,
    matmul,
    mean,
    mul,
    read_tensor,
    reciprocal_safe,
    relu,
    reshape,
    save_tensors,
    sigmoid,
    square,
    stack,
    sub,
    swapaxes,
    tanh,
    transpose,
    tsum,
    write_tensor,
)

SHAPE = (3, 4)


@pytest.fixture
def weights():
    return np.random.default_rng(99).uniform(0.5, 1.5, size=SHAPE)


def away_from_zero(rng, shape=SHAPE):
    return rng.uniform(0.3, 1.5, size=shape) * rng.choice([-1.0, 1.0], size=shape)


UNARY = {
    "tanh": (tanh, lambda rng: rng.normal(0, 1, SHAPE)),
    "sigmoid": (sigmoid, lambda rng: rng.normal(0, 2, SHAPE)),
    "relu": (relu, away_from_zero),
    "square": (square, lambda rng: rng.normal(0, 1, SHAPE)),
    "neg": (lambda a: -a, lambda rng: rng.normal(0, 1, SHAPE)),
    "inv_sqrt_safe": (inv_sqrt_safe, lambda rng: rng.uniform(0.5, 2.0, SHAPE)),
    "reciprocal_safe": (reciprocal_safe, away_from_zero),
    "swapaxes": (lambda a: swapaxes(a, 0, 1), lambda rng: rng.normal(0, 1, SHAPE)),
    "transpose": (lambda a: transpose(a, (1, 0)), lambda rng: rng.normal(0, 1, SHAPE)),
    "reshape": (lambda a: reshape(a, (2, 6)), lambda rng: rng.normal(0, 1, SHAPE)),
    "getitem": (lambda a: getitem(a, (slice(None), [0, 2, 2])), lambda rng: rng.normal(0, 1, SHAPE)),
    "row_sum": (lambda a: tsum(a, axis=1, keepdims=True), lambda rng: rng.normal(0, 1, SHAPE)),
    "col_mean": (lambda a: mean(a, axis=0), lambda rng: rng.normal(0, 1, SHAPE)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_primitive_gradients(name):
    op, sample = UNARY[name]
    rng = np.random.default_rng(sorted(UNARY).index(name))
    x = Parameter(sample(rng), name="x")

    def loss():
        out = op(x)
        w = Tensor(np.linspace(0.5, 1.5, out.size).reshape(out.shape))
        return tsum(mul(out, w))

    assert finite_difference_check(loss, [x]) < 1e-6


BINARY = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "add_broadcast_row": lambda a, b: add(a, getitem(b, (slice(0, 1), slice(None)))),
    "matmul": lambda a, b: matmul(a, swapaxes(b, 0, 1)),
    "concat": lambda a, b: concat([a, b], axis=-1),
    "stack": lambda a, b: stack([a, b], axis=0),
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_primitive_gradients(name, weights):
    op = BINARY[name]
    rng = np.random.default_rng(7)
    a = Parameter(rng.normal(0, 1, SHAPE), name="a")
    b = Parameter(rng.normal(0, 1, SHAPE), name="b")

    def loss():
        out = op(a, b)
        w = Tensor(np.linspace(0.5, 1.5, out.size).reshape(out.shape))
        return tsum(mul(out, w))

    assert finite_difference_check(loss, [a, b]) < 1e-6


def test_forward_examples():
    x = np.random.default_rng(1).normal(size=(3, 5))
    np.testing.assert_array_equal(matmul(eye(3), x).data, x)
    np.testing.assert_array_equal(sigmoid(Tensor(np.zeros(SHAPE))).data, np.full(SHAPE, 0.5))
    assert concat([Tensor(np.zeros((2, 3))), Tensor(np.ones((2, 5)))], axis=-1).shape == (2, 8)


def test_sigmoid_is_stable_at_extremes():
    s = sigmoid(Tensor(np.array([-1000.0, 1000.0]))).data
    assert s[0] == 0.0 and s[1] == 1.0


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeMismatch):
        matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 1))))
    with pytest.raises(ShapeMismatch):
        add(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
    with pytest.raises(ShapeMismatch):
        concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))], axis=-1)


def test_non_finite_rejected():
    with pytest.raises(NonFiniteValue):
        Tensor([1.0, np.nan])
    p = Parameter(np.zeros(2))
    with pytest.raises(NonFiniteValue):
        p.assign(np.array([np.inf, 0.0]))


def test_backward_two_by_two_by_hand():
    W = Parameter(np.array([[1.0, 2.0], [3.0, 4.0]]), name="W")
    x = Tensor(np.array([[5.0], [7.0]]))
    backward(tsum(matmul(W, x)))
    np.testing.assert_array_equal(W.grad, np.array([[5.0, 7.0], [5.0, 7.0]]))


def test_disconnected_parameter_gets_zero_gradient():
    used = Parameter(np.ones(3))
    unused = Parameter(np.ones(3))

    def loss():
        return tsum(square(used))

    backward(loss())
    assert unused.grad is None
    assert finite_difference_check(loss, [used, unused]) < 1e-9


def test_tanh_gradient_at_zero_is_one():
    x = Parameter(np.zeros(1))
    backward(tsum(tanh(x)))
    assert x.grad[0] == 1.0


def test_gradients_accumulate_until_reset():
    x = Parameter(np.array([2.0]))
    backward(tsum(square(x)))
    backward(tsum(square(x)))
    assert x.grad[0] == 8.0
    x.zero_grad()
    assert x.grad is None


def test_shared_subexpression_gradient():
    x = Parameter(np.array([3.0]))
    y = mul(x, x)
    backward(tsum(add(y, y)))
    assert x.grad[0] == 12.0


def test_non_scalar_loss():
    with pytest.raises(NonScalarLoss):
        backward(Parameter(np.ones(2)) * 2.0)


def test_quadratic_loss_is_exact():
    theta = Parameter(np.random.default_rng(2).uniform(0.5, 1.5, SHAPE))
    assert finite_difference_check(lambda: tsum(square(theta)), [theta]) < 1e-9


def test_constant_loss():
    theta = Parameter(np.ones(SHAPE))
    assert finite_difference_check(lambda: Tensor(3.0), [theta]) == 0.0


def test_finite_difference_rejects_bad_step():
    with pytest.raises(ValueError):
        finite_difference_check(lambda: Tensor(0.0), [], h=0.0)


def test_matmul_associativity():
    rng = np.random.default_rng(3)
    A, B, C = (Tensor(np.eye(4) + 0.1 * rng.normal(size=(4, 4))) for _ in range(3))
    left = matmul(matmul(A, B), C).data
    right = matmul(A, matmul(B, C)).data
    np.testing.assert_allclose(left, right, rtol=1e-10)


def test_tensor_binary_format():
    data = np.arange(6, dtype=np.float64).reshape(2, 3) / 7.0
    buf = io.BytesIO()
    write_tensor(buf, data)
    raw = buf.getvalue()
    assert raw[:4] == b"DANT"
    assert int.from_bytes(raw[4:8], "little") == 2
    assert len(raw) == 4 + 4 + 2 * 8 + 6 * 8
    buf.seek(0)
    np.testing.assert_array_equal(read_tensor(buf).data, data)


def test_named_tensor_files(tmp_path):
    tensors = {"w": np.ones((2, 2)), "scalar": np.array(3.5), "layer.bias": np.zeros(4)}
    path = save_tensors(tmp_path / "model.ckpt", tensors)
    loaded = load_tensors(path)
    assert list(loaded) == list(tensors)
    assert loaded["scalar"].shape == ()
    for name, value in tensors.items():
        np.testing.assert_array_equal(loaded[name].data, value)
