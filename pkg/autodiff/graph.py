"""
Dense-array computation graph with reverse-mode gradients and forward-mode
coordinate tangents.

Every GraphNode holds a float64 value. When a query coordinate is seeded with a
tangent, each primitive also builds the tangent of its output as an ordinary
graph node, so a coordinate derivative stays connected to the trainable weights
and a single reverse pass yields mixed second derivatives.
"""

import threading
from contextlib import contextmanager
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

ArrayLike = Union["GraphNode", np.ndarray, float, int]

_STATE = threading.local()


class GraphError(Exception):
    """Base class for graph construction and differentiation errors."""


class ShapeError(GraphError, ValueError):
    """Operand shapes do not conform for the requested primitive."""


class NonFiniteError(GraphError, FloatingPointError):
    """A primitive produced NaN or Inf."""


def _tangents_enabled() -> bool:
    return not getattr(_STATE, "suspended", False)


@contextmanager
def suspend_tangents():
    """Build nodes without propagating tangents (used for tangent expressions)."""
    previous = getattr(_STATE, "suspended", False)
    _STATE.suspended = True
    try:
        yield
    finally:
        _STATE.suspended = previous


class GraphNode:
    """
    One value in the computation graph.

    Attributes:
        op: Name of the primitive that produced the node ("leaf" for inputs)
        inputs: Parent nodes the value was computed from
        value: The float64 array value
        tangent: Optional node holding the forward-mode directional derivative
        adjoint: Gradient of the loss w.r.t. this node, filled by backward()
    """

    __slots__ = ("op", "inputs", "value", "tangent", "adjoint", "_vjp", "name")
    __array_priority__ = 1000

    def __init__(
        self,
        value: np.ndarray,
        op: str = "leaf",
        inputs: Tuple["GraphNode", ...] = (),
        vjp: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None,
        name: Optional[str] = None,
    ):
        self.value = value
        self.op = op
        self.inputs = inputs
        self.tangent: Optional[GraphNode] = None
        self.adjoint: Optional[np.ndarray] = None
        self._vjp = vjp
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"GraphNode(op={self.op}{label}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return index_select(self, index)


def constant(value, name: Optional[str] = None) -> GraphNode:
    """Wrap an array as a leaf node that carries no tangent."""
    array = np.array(value, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        raise NonFiniteError(f"constant {name or ''} contains non-finite values")
    return GraphNode(array, name=name)


def variable(value, tangent=None, name: Optional[str] = None) -> GraphNode:
    """Leaf node optionally seeded with a forward-mode tangent."""
    node = constant(value, name=name)
    if tangent is not None:
        seed = np.broadcast_to(np.asarray(tangent, dtype=np.float64), node.shape)
        node.tangent = constant(np.array(seed), name=f"{name or 'leaf'}.tangent")
    return node


def as_node(x: ArrayLike) -> GraphNode:
    return x if isinstance(x, GraphNode) else constant(x)


def zeros_like(node: GraphNode) -> GraphNode:
    return constant(np.zeros_like(node.value))


def _check_finite(op: str, value: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"{op} produced non-finite values")
    return value


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _make(
    op: str,
    inputs: Tuple[GraphNode, ...],
    compute: Callable[[], np.ndarray],
    vjp: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
    tangent_rule: Optional[Callable[[], Optional[GraphNode]]] = None,
) -> GraphNode:
    with np.errstate(all="ignore"):
        value = np.asarray(compute(), dtype=np.float64)
    node = GraphNode(_check_finite(op, value), op=op, inputs=inputs, vjp=vjp)
    if tangent_rule is not None and _tangents_enabled():
        if any(parent.tangent is not None for parent in inputs):
            with suspend_tangents():
                node.tangent = tangent_rule()
    return node


def _tangent_sum(*terms: Optional[GraphNode]) -> Optional[GraphNode]:
    present = [term for term in terms if term is not None]
    if not present:
        return None
    total = present[0]
    for term in present[1:]:
        total = add(total, term)
    return total


def _broadcast_shape(op: str, a: GraphNode, b: GraphNode) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from exc


# ---------------------------------------------------------------------------
# Elementwise binary primitives
# ---------------------------------------------------------------------------


def add(a: ArrayLike, b: ArrayLike) -> GraphNode:
    a, b = as_node(a), as_node(b)
    _broadcast_shape("add", a, b)
    return _make(
        "add",
        (a, b),
        lambda: a.value + b.value,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        lambda: _tangent_sum(a.tangent, b.tangent),
    )


def sub(a: ArrayLike, b: ArrayLike) -> GraphNode:
    a, b = as_node(a), as_node(b)
    _broadcast_shape("sub", a, b)
    return _make(
        "sub",
        (a, b),
        lambda: a.value - b.value,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        lambda: _tangent_sum(a.tangent, neg(b.tangent) if b.tangent is not None else None),
    )


def mul(a: ArrayLike, b: ArrayLike) -> GraphNode:
    a, b = as_node(a), as_node(b)
    _broadcast_shape("mul", a, b)
    return _make(
        "mul",
        (a, b),
        lambda: a.value * b.value,
        lambda g: (
            _unbroadcast(g * b.value, a.shape),
            _unbroadcast(g * a.value, b.shape),
        ),
        lambda: _tangent_sum(
            mul(a.tangent, b) if a.tangent is not None else None,
            mul(a, b.tangent) if b.tangent is not None else None,
        ),
    )


def div(a: ArrayLike, b: ArrayLike) -> GraphNode:
    a, b = as_node(a), as_node(b)
    _broadcast_shape("div", a, b)

    def tangent():
        out = node_holder[0]
        return _tangent_sum(
            div(a.tangent, b) if a.tangent is not None else None,
            neg(div(mul(out, b.tangent), b)) if b.tangent is not None else None,
        )

    node_holder: List[GraphNode] = []
    node = _make(
        "div",
        (a, b),
        lambda: a.value / b.value,
        lambda g: (
            _unbroadcast(g / b.value, a.shape),
            _unbroadcast(-g * a.value / (b.value * b.value), b.shape),
        ),
        None,
    )
    node_holder.append(node)
    _attach_tangent(node, tangent)
    return node


def _attach_tangent(node: GraphNode, rule: Callable[[], Optional[GraphNode]]) -> None:
    """Tangent rules that need the output node itself are attached after creation."""
    if _tangents_enabled() and any(parent.tangent is not None for parent in node.inputs):
        with suspend_tangents():
            node.tangent = rule()


def maximum(a: ArrayLike, floor: float) -> GraphNode:
    """Elementwise max with a constant; gradient flows where a >= floor."""
    a = as_node(a)
    mask = (a.value >= floor).astype(np.float64)
    return _make(
        "maximum",
        (a,),
        lambda: np.maximum(a.value, floor),
        lambda g: (g * mask,),
        lambda: mul(constant(mask), a.tangent),
    )


def minimum(a: ArrayLike, ceiling: float) -> GraphNode:
    """Elementwise min with a constant; gradient flows where a <= ceiling."""
    a = as_node(a)
    mask = (a.value <= ceiling).astype(np.float64)
    return _make(
        "minimum",
        (a,),
        lambda: np.minimum(a.value, ceiling),
        lambda g: (g * mask,),
        lambda: mul(constant(mask), a.tangent),
    )


# ---------------------------------------------------------------------------
# Elementwise unary primitives
# ---------------------------------------------------------------------------


def neg(a: ArrayLike) -> GraphNode:
    a = as_node(a)
    return _make("neg", (a,), lambda: -a.value, lambda g: (-g,), lambda: neg(a.tangent))


def square(a: ArrayLike) -> GraphNode:
    a = as_node(a)
    return _make(
        "square",
        (a,),
        lambda: a.value * a.value,
        lambda g: (2.0 * g * a.value,),
        lambda: mul(mul(2.0, a), a.tangent),
    )


def abs_(a: ArrayLike) -> GraphNode:
    a = as_node(a)
    sign = np.sign(a.value)
    return _make(
        "abs",
        (a,),
        lambda: np.abs(a.value),
        lambda g: (g * sign,),
        lambda: mul(constant(sign), a.tangent),
    )


def exp(a: ArrayLike) -> GraphNode:
    a = as_node(a)
    node = _make("exp", (a,), lambda: np.exp(a.value), lambda g: (g * node.value,))
    _attach_tangent(node, lambda: mul(node, a.tangent))
    return node


def log(a: ArrayLike) -> GraphNode:
    a = as_node(a)
    if np.any(a.value <= 0):
        raise NonFiniteError("log of a non-positive value")
    return _make(
        "log",
        (a,),
        lambda: np.log(a.value),
        lambda g: (g / a.value,),
        lambda: div(a.tangent, a),
    )


def sin(a: ArrayLike) -> GraphNode:
    a = as_node(a)
    return _make(
        "sin",
        (a,),
        lambda: np.sin(a.value),
        lambda g: (g * np.cos(a.value),),
        lambda: mul(cos(a), a.tangent),
    )


def cos(a: ArrayLike) -> GraphNode:
    a = as_node(a)
    return _make(
        "cos",
        (a,),
        lambda: np.cos(a.value),
        lambda g: (-g * np.sin(a.value),),
        lambda: neg(mul(sin(a), a.tangent)),
    )


def tanh(a: ArrayLike) -> GraphNode:
    a = as_node(a)
    node = _make(
        "tanh",
        (a,),
        lambda: np.tanh(a.value),
        lambda g: (g * (1.0 - node.value * node.value),),
    )
    _attach_tangent(node, lambda: mul(sub(1.0, square(node)), a.tangent))
    return node


def _sigmoid_value(x: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def sigmoid(a: ArrayLike) -> GraphNode:
    a = as_node(a)
    node = _make(
        "sigmoid",
        (a,),
        lambda: _sigmoid_value(a.value),
        lambda g: (g * node.value * (1.0 - node.value),),
    )
    _attach_tangent(node, lambda: mul(mul(node, sub(1.0, node)), a.tangent))
    return node


def softplus(a: ArrayLike) -> GraphNode:
    a = as_node(a)
    return _make(
        "softplus",
        (a,),
        lambda: np.logaddexp(0.0, a.value),
        lambda g: (g * _sigmoid_value(a.value),),
        lambda: mul(sigmoid(a), a.tangent),
    )


# ---------------------------------------------------------------------------
# Reductions and structural primitives
# ---------------------------------------------------------------------------


def sum_(a: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> GraphNode:
    a = as_node(a)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(
        "sum",
        (a,),
        lambda: np.sum(a.value, axis=axis, keepdims=keepdims),
        vjp,
        lambda: sum_(a.tangent, axis=axis, keepdims=keepdims),
    )


def mean(a: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> GraphNode:
    a = as_node(a)
    count = a.size if axis is None else a.shape[axis]
    if count == 0:
        raise ShapeError("mean of an empty array")
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a: ArrayLike, shape: Tuple[int, ...]) -> GraphNode:
    a = as_node(a)
    try:
        np.empty(a.shape).reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {shape}") from exc
    return _make(
        "reshape",
        (a,),
        lambda: a.value.reshape(shape),
        lambda g: (g.reshape(a.shape),),
        lambda: reshape(a.tangent, shape),
    )


def flatten(a: ArrayLike) -> GraphNode:
    """Collapse every axis after the first (batch) axis."""
    a = as_node(a)
    return reshape(a, (a.shape[0], int(np.prod(a.shape[1:], dtype=int))))


def concat(nodes: Sequence[ArrayLike], axis: int = -1) -> GraphNode:
    parts = [as_node(n) for n in nodes]
    if not parts:
        raise ShapeError("concat of an empty sequence")
    try:
        np.concatenate([np.empty(p.shape) for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: incompatible shapes {[p.shape for p in parts]}") from exc
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def tangent():
        pieces = [p.tangent if p.tangent is not None else zeros_like(p) for p in parts]
        return concat(pieces, axis=axis)

    return _make(
        "concat",
        tuple(parts),
        lambda: np.concatenate([p.value for p in parts], axis=axis),
        lambda g: tuple(np.split(g, bounds, axis=axis)),
        tangent,
    )


def index_select(a: ArrayLike, index) -> GraphNode:
    """Basic or integer-array indexing; repeated indices accumulate in the gradient."""
    a = as_node(a)
    try:
        a.value[index]
    except IndexError as exc:
        raise ShapeError(f"index out of range for shape {a.shape}") from exc

    def vjp(g):
        grad = np.zeros_like(a.value)
        np.add.at(grad, index, g)
        return (grad,)

    return _make(
        "index",
        (a,),
        lambda: a.value[index],
        vjp,
        lambda: index_select(a.tangent, index),
    )


def matmul(a: ArrayLike, b: ArrayLike) -> GraphNode:
    a, b = as_node(a), as_node(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    return _make(
        "matmul",
        (a, b),
        lambda: a.value @ b.value,
        lambda g: (g @ b.value.T, a.value.T @ g),
        lambda: _tangent_sum(
            matmul(a.tangent, b) if a.tangent is not None else None,
            matmul(a, b.tangent) if b.tangent is not None else None,
        ),
    )


def _correlate(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    kh, kw = kernel.shape[2:]
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    return np.einsum("bchwij,ocij->bohw", windows, kernel, optimize=True)


def conv2d(x: ArrayLike, kernel: ArrayLike) -> GraphNode:
    """
    Valid-padding, stride-1 2-D convolution (cross-correlation).

    Args:
        x: Input of shape (batch, in_channels, H, W)
        kernel: Weights of shape (out_channels, in_channels, kh, kw)

    Returns:
        Node of shape (batch, out_channels, H - kh + 1, W - kw + 1)
    """
    x, kernel = as_node(x), as_node(kernel)
    if x.value.ndim != 4 or kernel.value.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D operands, got {x.shape} and {kernel.shape}")
    _, c_in, height, width = x.shape
    _, k_in, kh, kw = kernel.shape
    if c_in != k_in:
        raise ShapeError(f"conv2d: input has {c_in} channels, kernel expects {k_in}")
    if kh > height or kw > width:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than input {height}x{width}")

    def vjp(g):
        padded = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
        flipped = kernel.value[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        grad_x = _correlate(padded, flipped)
        windows = np.lib.stride_tricks.sliding_window_view(x.value, (kh, kw), axis=(2, 3))
        grad_k = np.einsum("bchwij,bohw->ocij", windows, g, optimize=True)
        return grad_x, grad_k

    return _make(
        "conv2d",
        (x, kernel),
        lambda: _correlate(x.value, kernel.value),
        vjp,
        lambda: _tangent_sum(
            conv2d(x.tangent, kernel) if x.tangent is not None else None,
            conv2d(x, kernel.tangent) if kernel.tangent is not None else None,
        ),
    )


# ---------------------------------------------------------------------------
# Differentiation drivers
# ---------------------------------------------------------------------------


def _topological_order(root: GraphNode) -> List[GraphNode]:
    order: List[GraphNode] = []
    state: Dict[int, int] = {}  # 1 = on stack, 2 = done
    stack: List[Tuple[GraphNode, int]] = [(root, 0)]
    while stack:
        node, child = stack.pop()
        key = id(node)
        if child == 0:
            if state.get(key) == 2:
                continue
            if state.get(key) == 1:
                raise GraphError(f"cycle detected at {node!r}")
            state[key] = 1
        if child < len(node.inputs):
            stack.append((node, child + 1))
            parent = node.inputs[child]
            marker = state.get(id(parent))
            if marker == 1:
                raise GraphError(f"cycle detected at {parent!r}")
            if marker is None:
                stack.append((parent, 0))
        else:
            state[key] = 2
            order.append(node)
    return order


def backward(loss: GraphNode, params) -> Dict[str, np.ndarray]:
    """
    Reverse pass from a scalar loss.

    Args:
        loss: Scalar-shaped node
        params: BoundParams (or any mapping name -> leaf GraphNode)

    Returns:
        Gradient map name -> array; parameters the loss does not reach get zeros.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _topological_order(loss)
    for node in order:
        node.adjoint = None
    loss.adjoint = np.ones_like(loss.value)
    for node in reversed(order):
        if node.adjoint is None or node._vjp is None:
            continue
        grads = node._vjp(node.adjoint)
        for parent, grad in zip(node.inputs, grads):
            if grad is None:
                continue
            grad = np.asarray(grad, dtype=np.float64).reshape(parent.shape)
            parent.adjoint = grad if parent.adjoint is None else parent.adjoint + grad
    reached = {id(node) for node in order}
    gradients = {}
    for name, leaf in params.items():
        if id(leaf) in reached and leaf.adjoint is not None:
            gradients[name] = leaf.adjoint.copy()
        else:
            gradients[name] = np.zeros_like(leaf.value)
    return gradients


Closure = Callable[[GraphNode], Union[GraphNode, Tuple[GraphNode, ...]]]


def coordinate_derivative(
    network_closure: Closure, y, direction: Sequence[float]
) -> Tuple[Tuple[GraphNode, ...], Tuple[GraphNode, ...]]:
    """
    Evaluate a closure at query coordinates seeded with a basis tangent.

    Args:
        network_closure: Maps a coordinate node of shape (N, 2) to one node or a tuple
        y: Coordinates, shape (N, 2) or (2,)
        direction: Basis vector in (x, t), e.g. (1, 0) for d/dx

    Returns:
        (outputs, derivatives): the closure outputs and, per output, a node holding
        d(output)/d(coordinate component). Derivative nodes remain connected to the
        graph, so backward() through them gives exact mixed derivatives.
    """
    coords = np.atleast_2d(np.asarray(y, dtype=np.float64))
    seed = np.broadcast_to(np.asarray(direction, dtype=np.float64), coords.shape)
    point = variable(coords, tangent=seed, name="y")
    outputs = network_closure(point)
    if isinstance(outputs, GraphNode):
        outputs = (outputs,)
    derivatives = tuple(
        out.tangent if out.tangent is not None else zeros_like(out) for out in outputs
    )
    return tuple(outputs), derivatives
