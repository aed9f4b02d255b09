import math

import numpy as np
from pytest import mark, raises

from catharm.exceptions import GraphStateError, NonFiniteError, ShapeMismatch
from catharm.numcore import (
    Adam,
    Graph,
    Sgd,
    Tensor,
    grad_check,
    make_optimizer,
    median_bandwidth,
    mmd_squared,
    op_suite,
)


def test_tensor_is_read_only():
    tensor = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert tensor.shape == (2, 2)
    with raises(ValueError):
        tensor.data[0, 0] = 5.0
    copy = tensor.numpy()
    copy[0, 0] = 5.0
    assert tensor.data[0, 0] == 1.0


@mark.parametrize(
    "data, shape, error",
    (
        ([1.0, float("nan")], None, NonFiniteError),
        ([1.0, float("inf")], None, NonFiniteError),
        ([1.0, 2.0, 3.0], (2, 2), ShapeMismatch),
        (np.zeros((0, 3)), None, ShapeMismatch),
    ),
)
def test_tensor_rejects(data, shape, error):
    with raises(error):
        Tensor(data, shape)


def test_tensor_equality():
    assert Tensor([1, 2, 3]) == Tensor([1.0, 2.0, 3.0])
    assert Tensor([1, 2, 3]) != Tensor([[1, 2, 3]])
    assert hash(Tensor([1, 2])) == hash(Tensor([1.0, 2.0]))


def test_forward_backward():
    graph = Graph()
    x = graph.input("x", (None, 2))
    w = graph.parameter("w", [[1.0, -1.0], [2.0, 0.5]])
    graph.output(graph.sum(graph.mul(graph.matmul(x, w), graph.matmul(x, w))))
    inputs = {"x": Tensor([[1.0, 2.0], [0.5, -1.0]])}
    value = graph.forward(inputs)
    y = inputs["x"].data @ graph.parameters["w"].data
    assert math.isclose(value.item(), float(np.sum(y * y)))
    gradient = graph.backward()["w"].data
    np.testing.assert_allclose(gradient, 2.0 * inputs["x"].data.T @ y)


def test_backward_needs_forward():
    graph = Graph()
    graph.sum(graph.parameter("a", [1.0, 2.0]))
    with raises(GraphStateError):
        graph.backward()


def test_backward_needs_scalar():
    graph = Graph()
    graph.scale(graph.parameter("a", [1.0, 2.0]), 2.0)
    graph.forward()
    with raises(GraphStateError):
        graph.backward()


def test_input_shape_checked():
    graph = Graph()
    graph.sum(graph.input("x", (None, 3)))
    with raises(ShapeMismatch):
        graph.forward({"x": Tensor([[1.0, 2.0]])})
    with raises(ShapeMismatch):
        graph.forward({})


def test_unused_parameter_has_zero_gradient():
    graph = Graph()
    graph.parameter("unused", [[1.0, 2.0]])
    graph.output(graph.sum(graph.parameter("a", [3.0])))
    graph.forward()
    assert graph.backward()["unused"] == Tensor([[0.0, 0.0]])


def test_operands_belong_to_graph():
    first, second = Graph(), Graph()
    node = first.parameter("a", [1.0])
    with raises(GraphStateError):
        second.sum(node)


def test_nonfinite_forward():
    graph = Graph()
    graph.exp(graph.parameter("a", [800.0]))
    with raises(NonFiniteError):
        graph.forward()


@mark.parametrize("kind", sorted(op_suite(0)))
def test_grad_check_every_op(kind):
    report = grad_check(op_suite(0)[kind], seed=0, tolerance=1e-5)
    assert report.passed, report.errors


def test_grad_check_counts_entries():
    graph = Graph()
    graph.output(graph.sum(graph.parameter("a", [1.0, 2.0])))
    graph.forward()
    report = grad_check(graph, tolerance=1e-5)
    assert report.passed
    assert report.checked == {"a": 2}


def test_mmd_of_identical_samples_is_zero():
    a = np.random.default_rng(0).standard_normal((6, 3))
    value, _ = mmd_squared(a, a.copy(), 1.0)
    assert abs(value) < 1e-12


def test_mmd_is_symmetric():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((5, 2)), rng.standard_normal((7, 2)) + 1.0
    assert mmd_squared(a, b)[0] == mmd_squared(b, a)[0]


def test_mmd_singletons_closed_form():
    value, sigma = mmd_squared(np.zeros((1, 1)), np.ones((1, 1)), 1.0)
    assert sigma == 1.0
    assert math.isclose(value, 2.0 - 2.0 * math.exp(-0.5), rel_tol=1e-12)
    assert math.isclose(value, 0.7869, abs_tol=1e-4)


def test_median_bandwidth():
    a = np.array([[0.0], [1.0]])
    b = np.array([[3.0]])
    assert median_bandwidth(a, b) == 2.0
    assert median_bandwidth(np.zeros((2, 2)), np.zeros((1, 2))) == 1.0


def test_sgd_step():
    updated = Sgd(0.1).step({"w": Tensor([1.0, 2.0])}, {"w": Tensor([10.0, -10.0])})
    np.testing.assert_allclose(updated["w"].data, [0.0, 3.0])


def test_missing_gradient_counts_as_zero():
    updated = Sgd(0.1).step({"w": Tensor([1.0]), "v": Tensor([2.0])}, {"w": Tensor([1.0])})
    assert updated["v"] == Tensor([2.0])


def test_adam_first_step_moves_by_learning_rate():
    updated = Adam(0.01).step({"w": Tensor([1.0, 1.0])}, {"w": Tensor([5.0, -0.1])})
    np.testing.assert_allclose(updated["w"].data, [0.99, 1.01], rtol=1e-6)


@mark.parametrize("kind, cls", (("sgd", Sgd), ("adam", Adam)))
def test_make_optimizer(kind, cls):
    assert isinstance(make_optimizer(kind, 0.1), cls)


def test_make_optimizer_unknown():
    with raises(ValueError):
        make_optimizer("rmsprop", 0.1)
    with raises(ValueError):
        Sgd(0.0)
