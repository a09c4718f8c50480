"""Reverse-mode automatic differentiation over scalars and dense arrays.

A ``Value`` wraps a float64 numpy array of rank 0, 1, or 2 together with an
adjoint buffer and a record of the primitive that produced it.  Graphs are
built define-by-run: every call to a primitive creates a fresh node, so the
tape is rebuilt on each forward pass and variable sequence lengths cost
nothing.  ``backward`` walks the graph once in reverse topological order and
accumulates ``d(root)/d(node)`` into every reachable ``grad``.

Gradients of leaves persist across graphs, which is how losses built on
separate tapes accumulate into shared parameters; interior nodes are
single-use and a second backward pass through them raises ``GraphError``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "GraphError",
    "Value",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "tanh",
    "sigmoid",
    "exp",
    "log",
    "gather",
    "concat",
    "stack",
    "sum_reduce",
    "softmax",
    "smin",
    "smax",
    "grad_check",
]

LOG_FLOOR = 1e-12


class GraphError(ValueError):
    """Malformed graph construction or use: bad shapes, stale tape, non-scalar root."""


def _as_array(data) -> np.ndarray:
    if isinstance(data, np.ndarray) and data.dtype == np.float64:
        return data
    return np.asarray(data, dtype=np.float64)


class Value:
    """One node of the differentiation graph: data, adjoint, provenance."""

    __slots__ = ("data", "grad", "_parents", "_backprop", "_op", "_done")

    def __init__(self, data, _parents=(), _backprop=None, _op="leaf"):
        data = _as_array(data)
        if data.ndim > 2:
            raise GraphError(f"rank {data.ndim} array not supported (max rank 2)")
        self.data = data
        self.grad = np.zeros_like(data)
        self._parents = _parents
        self._backprop = _backprop
        self._op = _op
        self._done = False

    # -- bookkeeping ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Value(op={self._op!r}, shape={self.data.shape})"

    # -- operators --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sum(self, axis=None):
        return sum_reduce(self, axis=axis)

    # -- backward ---------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(node) into every node reachable from self.

        The root must be scalar.  Interior nodes are marked used; running
        backward a second time through them (same root or an enclosing one)
        raises GraphError because their adjoints are stale.  Leaf gradients
        are deliberately left alone so separate graphs can accumulate into
        shared parameters.
        """
        if self.data.size != 1:
            raise GraphError(
                f"backward root must be scalar, got shape {self.data.shape}"
            )
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            if node._done:
                raise GraphError(
                    f"stale tape: node {node._op!r} already consumed by a backward pass"
                )
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = self.grad + np.ones_like(self.data)
        for node in reversed(topo):
            if node._backprop is not None:
                node._backprop()
                node._done = True


def _lift(x) -> Value:
    return x if isinstance(x, Value) else Value(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast adjoint back to the operand's shape."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _binary_forward(op: str, a: Value, b, fn):
    """Apply ``fn`` to the operand arrays, raising GraphError on shape clash.

    ``b`` may be a Value or a plain constant; constants are folded into the
    node instead of becoming graph leaves.
    """
    b_is_value = isinstance(b, Value)
    b_data = b.data if b_is_value else _as_array(b)
    try:
        out = fn(a.data, b_data)
    except ValueError as err:
        raise GraphError(
            f"{op}: incompatible shapes {a.data.shape} and {b_data.shape}"
        ) from err
    if out.ndim > 2:
        raise GraphError(f"{op}: result rank {out.ndim} exceeds 2")
    return out, b_is_value, b_data


# -- arithmetic primitives --------------------------------------------------


def add(a: Value, b) -> Value:
    data, b_is_value, b_data = _binary_forward("add", a, b, np.add)
    if b_is_value:
        out = Value(data, (a, b), _op="add")

        def backprop():
            a.grad += _unbroadcast(out.grad, a.data.shape)
            b.grad += _unbroadcast(out.grad, b.data.shape)

    else:
        out = Value(data, (a,), _op="add")

        def backprop():
            a.grad += _unbroadcast(out.grad, a.data.shape)

    out._backprop = backprop
    return out


def sub(a: Value, b) -> Value:
    data, b_is_value, b_data = _binary_forward("sub", a, b, np.subtract)
    if b_is_value:
        out = Value(data, (a, b), _op="sub")

        def backprop():
            a.grad += _unbroadcast(out.grad, a.data.shape)
            b.grad -= _unbroadcast(out.grad, b.data.shape)

    else:
        out = Value(data, (a,), _op="sub")

        def backprop():
            a.grad += _unbroadcast(out.grad, a.data.shape)

    out._backprop = backprop
    return out


def mul(a: Value, b) -> Value:
    data, b_is_value, b_data = _binary_forward("mul", a, b, np.multiply)
    if b_is_value:
        out = Value(data, (a, b), _op="mul")

        def backprop():
            a.grad += _unbroadcast(out.grad * b.data, a.data.shape)
            b.grad += _unbroadcast(out.grad * a.data, b.data.shape)

    else:
        out = Value(data, (a,), _op="mul")

        def backprop():
            a.grad += _unbroadcast(out.grad * b_data, a.data.shape)

    out._backprop = backprop
    return out


def div(a: Value, b) -> Value:
    data, b_is_value, b_data = _binary_forward("div", a, b, np.divide)
    if b_is_value:
        out = Value(data, (a, b), _op="div")

        def backprop():
            a.grad += _unbroadcast(out.grad / b.data, a.data.shape)
            b.grad -= _unbroadcast(out.grad * out.data / b.data, b.data.shape)

    else:
        out = Value(data, (a,), _op="div")

        def backprop():
            a.grad += _unbroadcast(out.grad / b_data, a.data.shape)

    out._backprop = backprop
    return out


def matmul(a: Value, b: Value) -> Value:
    """Matrix product for rank <= 2 operands, numpy @ semantics."""
    b = _lift(b)
    try:
        data = a.data @ b.data
    except ValueError as err:
        raise GraphError(
            f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}"
        ) from err
    a_nd, b_nd = a.data.ndim, b.data.ndim
    out = Value(data, (a, b), _op="matmul")

    def backprop():
        g = out.grad
        if a_nd == 2 and b_nd == 2:
            a.grad += g @ b.data.T
            b.grad += a.data.T @ g
        elif a_nd == 2 and b_nd == 1:
            a.grad += np.outer(g, b.data)
            b.grad += a.data.T @ g
        elif a_nd == 1 and b_nd == 2:
            a.grad += b.data @ g
            b.grad += np.outer(a.data, g)
        else:  # vector dot product
            a.grad += g * b.data
            b.grad += g * a.data

    out._backprop = backprop
    return out


# -- elementwise nonlinearities ---------------------------------------------


def tanh(a: Value) -> Value:
    data = np.tanh(a.data)
    out = Value(data, (a,), _op="tanh")

    def backprop():
        a.grad += out.grad * (1.0 - out.data * out.data)

    out._backprop = backprop
    return out


def sigmoid(a: Value) -> Value:
    e = np.exp(-np.abs(a.data))
    data = np.where(a.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = Value(data, (a,), _op="sigmoid")

    def backprop():
        a.grad += out.grad * out.data * (1.0 - out.data)

    out._backprop = backprop
    return out


def exp(a: Value) -> Value:
    data = np.exp(a.data)
    out = Value(data, (a,), _op="exp")

    def backprop():
        a.grad += out.grad * out.data

    out._backprop = backprop
    return out


def log(a: Value) -> Value:
    """Natural log with the input floored at 1e-12; zero adjoint below the floor."""
    floored = np.maximum(a.data, LOG_FLOOR)
    data = np.log(floored)
    out = Value(data, (a,), _op="log")

    def backprop():
        a.grad += np.where(a.data >= LOG_FLOOR, out.grad / floored, 0.0)

    out._backprop = backprop
    return out


# -- structural primitives ---------------------------------------------------


def gather(a: Value, index) -> Value:
    """Select rows of a matrix or elements of a vector along axis 0.

    ``index`` may be a python int or an integer array; the adjoint scatters
    back with duplicate indices accumulating.
    """
    if a.data.ndim == 0:
        raise GraphError("gather: cannot index a scalar")
    idx = index if isinstance(index, (int, np.integer)) else np.asarray(index)
    try:
        data = a.data[idx]
    except IndexError as err:
        raise GraphError(
            f"gather: index {index!r} out of range for shape {a.data.shape}"
        ) from err
    out = Value(data, (a,), _op="gather")

    def backprop():
        np.add.at(a.grad, idx, out.grad)

    out._backprop = backprop
    return out


def concat(values, axis: int = 0) -> Value:
    """Concatenate along an existing axis; adjoint splits back per operand."""
    values = [_lift(v) for v in values]
    if not values:
        raise GraphError("concat: need at least one operand")
    try:
        data = np.concatenate([v.data for v in values], axis=axis)
    except ValueError as err:
        shapes = [v.data.shape for v in values]
        raise GraphError(f"concat: incompatible shapes {shapes}") from err
    sizes = [v.data.shape[axis] for v in values]
    offsets = np.cumsum([0] + sizes)
    out = Value(data, tuple(values), _op="concat")

    def backprop():
        for v, lo, hi in zip(values, offsets[:-1], offsets[1:]):
            if axis == 0:
                v.grad += out.grad[lo:hi]
            else:
                v.grad += out.grad[:, lo:hi]

    out._backprop = backprop
    return out


def stack(values) -> Value:
    """Concatenate equal-shape operands along a new leading axis."""
    values = [_lift(v) for v in values]
    if not values:
        raise GraphError("stack: need at least one operand")
    try:
        data = np.stack([v.data for v in values])
    except ValueError as err:
        shapes = [v.data.shape for v in values]
        raise GraphError(f"stack: incompatible shapes {shapes}") from err
    if data.ndim > 2:
        raise GraphError(f"stack: result rank {data.ndim} exceeds 2")
    out = Value(data, tuple(values), _op="stack")

    def backprop():
        for i, v in enumerate(values):
            v.grad += out.grad[i]

    out._backprop = backprop
    return out


def sum_reduce(a: Value, axis=None) -> Value:
    data = np.sum(a.data, axis=axis)
    out = Value(data, (a,), _op="sum_reduce")

    def backprop():
        if axis is None:
            a.grad += out.grad
        else:
            a.grad += np.expand_dims(out.grad, axis)

    out._backprop = backprop
    return out


def softmax(a: Value, axis: int = -1) -> Value:
    """Softmax along one axis, computed with max-subtraction for stability."""
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / np.sum(e, axis=axis, keepdims=True)
    out = Value(data, (a,), _op="softmax")

    def backprop():
        y, g = out.data, out.grad
        a.grad += y * (g - np.sum(g * y, axis=axis, keepdims=True))

    out._backprop = backprop
    return out


def smin(a: Value, b) -> Value:
    """Scalar minimum; the adjoint is routed to the smaller argument.

    On a tie the first argument receives the adjoint.  The second argument
    may be a plain constant, in which case no gradient flows when it wins.
    """
    a = _lift(a)
    b_is_value = isinstance(b, Value)
    b_data = b.data if b_is_value else _as_array(b)
    if a.data.size != 1 or b_data.size != 1:
        raise GraphError(
            f"smin: scalar operands required, got shapes {a.data.shape} and {b_data.shape}"
        )
    a_wins = a.data <= b_data
    parents = (a, b) if b_is_value else (a,)
    out = Value(a.data if a_wins else b_data, parents, _op="smin")

    def backprop():
        if a_wins:
            a.grad += out.grad
        elif b_is_value:
            b.grad += out.grad

    out._backprop = backprop
    return out


def smax(a: Value, b) -> Value:
    """Scalar maximum, companion of smin; ties favor the first argument."""
    a = _lift(a)
    b_is_value = isinstance(b, Value)
    b_data = b.data if b_is_value else _as_array(b)
    if a.data.size != 1 or b_data.size != 1:
        raise GraphError(
            f"smax: scalar operands required, got shapes {a.data.shape} and {b_data.shape}"
        )
    a_wins = a.data >= b_data
    parents = (a, b) if b_is_value else (a,)
    out = Value(a.data if a_wins else b_data, parents, _op="smax")

    def backprop():
        if a_wins:
            a.grad += out.grad
        elif b_is_value:
            b.grad += out.grad

    out._backprop = backprop
    return out


# -- verification -------------------------------------------------------------


def grad_check(fn, inputs, step: float = 1e-5, floor: float = 1e-8) -> float:
    """Compare analytic gradients of ``fn`` against central finite differences.

    ``fn`` must be a pure function taking one leaf Value per entry of
    ``inputs`` (a single array or a list of arrays) and returning a scalar
    Value; it is re-invoked for every probe, so each call builds a fresh
    graph.  Returns the max over all coordinates of

        |analytic - numeric| / max(|analytic|, |numeric|, floor)

    ``floor`` clamps the denominator: gradients smaller than it are
    compared absolutely, which matters when the function's value is large
    enough that finite-difference cancellation noise exceeds the default
    1e-8.  A non-finite function value at any probe raises GraphError
    naming the offending input and coordinate.
    """
    single = isinstance(inputs, np.ndarray) or np.isscalar(inputs)
    arrays = [np.asarray(inputs, dtype=np.float64)] if single else [
        np.asarray(x, dtype=np.float64) for x in inputs
    ]

    def call(arrs):
        leaves = [Value(x) for x in arrs]
        root = fn(leaves[0]) if single else fn(*leaves)
        if not isinstance(root, Value) or root.data.size != 1:
            raise GraphError("grad_check: function must return a scalar Value")
        return root, leaves

    root, leaves = call([x.copy() for x in arrays])
    if not np.isfinite(root.data).all():
        raise GraphError("grad_check: non-finite value at the base point")
    root.backward()
    analytic = [leaf.grad.copy() for leaf in leaves]

    worst = 0.0
    for k, base in enumerate(arrays):
        flat = base.reshape(-1)
        for i in range(flat.size):
            probes = []
            for sign in (+1.0, -1.0):
                shifted = [x.copy() for x in arrays]
                shifted[k].reshape(-1)[i] += sign * step
                value = float(call(shifted)[0].data)
                if not np.isfinite(value):
                    raise GraphError(
                        f"grad_check: non-finite value probing input {k} coordinate {i}"
                    )
                probes.append(value)
            numeric = (probes[0] - probes[1]) / (2.0 * step)
            a = float(analytic[k].reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            if err > worst:
                worst = err
    return worst
