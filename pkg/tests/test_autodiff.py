import numpy as np
import pytest

from autodiff import graph as G
from autodiff.params import ParamSet


def _numeric_gradient(f, array, eps=1e-6):
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        saved = array[index]
        array[index] = saved + eps
        up = f()
        array[index] = saved - eps
        down = f()
        array[index] = saved
        grad[index] = (up - down) / (2 * eps)
    return grad


def _mlp(params):
    bound = params.bind()

    def closure(y):
        hidden = G.tanh(y @ bound["w1"] + bound["b1"])
        return G.sigmoid(hidden) @ bound["w2"]

    return bound, closure


@pytest.fixture
def params():
    rng = np.random.default_rng(3)
    p = ParamSet()
    p.add("w1", rng.normal(size=(2, 5)))
    p.add("b1", rng.normal(size=(5,)))
    p.add("w2", rng.normal(size=(5, 1)))
    p.add("unused", np.ones(3))
    return p


def test_reverse_gradient_matches_finite_differences(params):
    y = np.array([[0.3, -0.2], [0.1, 0.7], [-0.5, 0.4]])

    def loss_value():
        _, closure = _mlp(params)
        return float(G.sum_(G.square(closure(G.constant(y)))).value)

    bound, closure = _mlp(params)
    grads = G.backward(G.sum_(G.square(closure(G.constant(y)))), bound)
    for name in ("w1", "b1", "w2"):
        np.testing.assert_allclose(
            grads[name], _numeric_gradient(loss_value, params[name]), rtol=1e-5, atol=1e-7
        )
    np.testing.assert_array_equal(grads["unused"], np.zeros(3))


def test_coordinate_derivative_matches_finite_differences(params):
    y = np.array([[0.2, 0.6], [-0.4, 0.1]])
    _, closure = _mlp(params)
    eps = 1e-6
    for axis in range(2):
        direction = np.eye(2)[axis]
        (out,), (deriv,) = G.coordinate_derivative(closure, y, direction)
        up = closure(G.constant(y + eps * direction)).value
        down = closure(G.constant(y - eps * direction)).value
        np.testing.assert_allclose(deriv.value, (up - down) / (2 * eps), rtol=1e-5, atol=1e-8)
        assert out.shape == (2, 1)


def test_mixed_derivative_through_tangent(params):
    # d/dw of sum(d out / dx) must match finite differences of the tangent itself
    y = np.array([[0.25, -0.3], [0.6, 0.2]])

    def tangent_sum():
        _, closure = _mlp(params)
        _, (deriv,) = G.coordinate_derivative(closure, y, (1.0, 0.0))
        return float(deriv.value.sum())

    bound, closure = _mlp(params)
    _, (deriv,) = G.coordinate_derivative(closure, y, (1.0, 0.0))
    grads = G.backward(G.sum_(deriv), bound)
    np.testing.assert_allclose(
        grads["w1"], _numeric_gradient(tangent_sum, params["w1"]), rtol=1e-4, atol=1e-7
    )


def test_constant_closure_has_zero_derivative():
    _, (deriv,) = G.coordinate_derivative(lambda y: G.constant(np.ones((3, 1))), np.zeros((3, 2)), (0, 1))
    np.testing.assert_array_equal(deriv.value, np.zeros((3, 1)))


def test_conv2d_gradient():
    rng = np.random.default_rng(0)
    p = ParamSet()
    p.add("k", rng.normal(size=(2, 1, 3, 3)))
    x = rng.normal(size=(1, 1, 5, 4))

    def loss_value():
        return float(G.sum_(G.square(G.conv2d(x, p["k"]))).value)

    bound = p.bind()
    out = G.conv2d(x, bound["k"])
    assert out.shape == (1, 2, 3, 2)
    grads = G.backward(G.sum_(G.square(out)), bound)
    np.testing.assert_allclose(grads["k"], _numeric_gradient(loss_value, p["k"]), rtol=1e-5)


def test_abs_and_clipping_gradients_are_signs():
    p = ParamSet()
    p.add("x", np.array([-2.0, 0.5, 3.0]))
    bound = p.bind()
    loss = G.sum_(G.add(G.abs_(bound["x"]), G.maximum(bound["x"], 1.0)))
    np.testing.assert_array_equal(G.backward(loss, bound)["x"], [-1.0, 1.0, 2.0])


def test_shape_and_finiteness_errors():
    with pytest.raises(G.ShapeError):
        G.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(G.NonFiniteError):
        G.log(np.array([-1.0]))
    with pytest.raises(G.ShapeError):
        G.backward(G.constant(np.ones(2)), {})


def test_param_set_rejects_duplicates_and_shape_mismatch():
    p = ParamSet()
    p.add("a", np.zeros(2))
    with pytest.raises(ValueError):
        p.add("a", np.zeros(2))
    with pytest.raises(ValueError):
        p.assign({"a": np.zeros(3)})
    with pytest.raises(KeyError):
        p.assign({})


_RNG = np.random.default_rng(17)
_X = _RNG.uniform(0.5, 1.5, size=(3, 4))
_C = _RNG.uniform(0.5, 1.5, size=(3, 4))
_KERNEL = _RNG.normal(size=(2, 1, 2, 2))
_IMAGE = _RNG.normal(size=(1, 1, 4, 5))

PRIMITIVES = {
    "add": lambda x: G.add(x, _C),
    "add_rhs": lambda x: G.add(_C, x),
    "sub": lambda x: G.sub(x, _C),
    "sub_rhs": lambda x: G.sub(_C, x),
    "mul": lambda x: G.mul(x, _C),
    "mul_rhs": lambda x: G.mul(_C, x),
    "div": lambda x: G.div(x, _C),
    "div_rhs": lambda x: G.div(_C, x),
    "maximum": lambda x: G.maximum(x, 1.0),
    "minimum": lambda x: G.minimum(x, 1.0),
    "neg": G.neg,
    "square": G.square,
    "abs": lambda x: G.abs_(G.sub(x, 1.0)),
    "exp": G.exp,
    "log": G.log,
    "sin": G.sin,
    "cos": G.cos,
    "tanh": G.tanh,
    "sigmoid": G.sigmoid,
    "softplus": G.softplus,
    "sum": G.sum_,
    "sum_axis": lambda x: G.sum_(x, axis=0),
    "mean_axis": lambda x: G.mean(x, axis=1, keepdims=True),
    "reshape": lambda x: G.reshape(x, (12, 1)),
    "concat": lambda x: G.concat([x, _C], axis=1),
    "index": lambda x: G.index_select(x, (slice(None), [0, 2, 2])),
    "matmul": lambda x: G.matmul(x, _C.T),
    "matmul_rhs": lambda x: G.matmul(_C.T, x),
    "conv2d": lambda x: G.conv2d(G.reshape(x, (1, 1, 3, 4)), _KERNEL),
    "conv2d_kernel": lambda x: G.conv2d(_IMAGE, G.reshape(x, (1, 1, 3, 4))),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_tangent_and_gradient_match_finite_differences(name):
    op = PRIMITIVES[name]
    direction = np.random.default_rng(5).normal(size=_X.shape)
    eps = 1e-6

    out = op(G.variable(_X, tangent=direction))
    numeric = (op(G.constant(_X + eps * direction)).value - op(G.constant(_X - eps * direction)).value) / (2 * eps)
    np.testing.assert_allclose(out.tangent.value, numeric, rtol=1e-6, atol=1e-8)

    weights = np.random.default_rng(6).normal(size=out.shape)
    leaf = G.constant(_X)
    grads = G.backward(G.sum_(G.mul(op(leaf), weights)), {"x": leaf})
    x = _X.copy()
    expected = _numeric_gradient(lambda: float(np.sum(op(G.constant(x)).value * weights)), x)
    np.testing.assert_allclose(grads["x"], expected, rtol=1e-6, atol=1e-8)
