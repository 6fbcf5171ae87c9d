# empbase/tensor.py
"""
This module implements a dense tensor with reverse-mode differentiation.

A `TensorValue` holds a float64 numpy array. Operations on tensors that
require gradients record their parents and a backward rule; calling
`backward()` on a scalar walks the recorded graph in reverse topological
order and accumulates gradients into the leaves.

Gradient recording can be switched off for inference with `no_grad()`.
The switch is thread local, so a model may be shared read-only across
threads for inference while one thread trains.
"""
import contextlib
import logging
import threading

import numpy as np

from .errors import DataError, ShapeError

logger = logging.getLogger(__name__)

DTYPE = np.float64
LOG_EPS = 1e-12

_grad_state = threading.local()


def is_grad_enabled():
    """True when operations record a graph in the current thread."""
    return getattr(_grad_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """
    Context manager that disables graph recording in this thread.

    Usage:
        with no_grad():
            outputs = model.forward(batch)
    """
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class TensorValue(object):
    """
    This class holds a dense real-valued array and its gradient.

    Default:
        TensorValue(data, requires_grad=False, name=None)

    Args:
        data: (array-like) : values, stored as float64
        requires_grad: (bool) : leaves with True accumulate gradients
        name: (str : None) : parameter name, used in error messages
    """

    # numpy defers to our reflected operators
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.name = name
        self._parents = ()
        self._backward = None

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"<TensorValue{label} shape={self.shape}>"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return self._backward is None

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self):
        return TensorValue(self.data)

    # operators
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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def backward(self, grad=None):
        """backward

        Accumulate gradients of this tensor into every leaf that
        requires them.

        Default:
            backward(grad=None)

        Args:
            grad: (array : None) : seed gradient, ones for a scalar
        """
        if not self.requires_grad:
            return
        if grad is None:
            if self.size != 1:
                raise ShapeError("backward of a non-scalar", self.shape)
            grad = np.ones_like(self.data)

        order = _topological_order(self)
        grads = {id(self): np.asarray(grad, dtype=DTYPE)}
        for node in reversed(order):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue
            if node.is_leaf:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += node_grad
                continue
            parent_grads = node._backward(node_grad)
            for parent, parent_grad in zip(node._parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad


def _topological_order(root):
    """Iterative post-order walk; recursion would overflow on long graphs."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def as_tensor(value):
    """Wrap arrays and scalars as constant tensors."""
    if isinstance(value, TensorValue):
        return value
    return TensorValue(value)


def _result(data, parents, backward):
    """Build an op result, recording the graph only when needed."""
    out = TensorValue(data)
    if is_grad_enabled() and any(parent.requires_grad for parent in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape)


# elementwise arithmetic


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast("add", a, b)

    def backward(grad):
        return unbroadcast(grad, a.shape), unbroadcast(grad, b.shape)

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast("sub", a, b)

    def backward(grad):
        return unbroadcast(grad, a.shape), unbroadcast(-grad, b.shape)

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast("mul", a, b)

    def backward(grad):
        return (
            unbroadcast(grad * b.data, a.shape),
            unbroadcast(grad * a.data, b.shape),
        )

    return _result(a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast("div", a, b)

    def backward(grad):
        return (
            unbroadcast(grad / b.data, a.shape),
            unbroadcast(-grad * a.data / (b.data * b.data), b.shape),
        )

    return _result(a.data / b.data, (a, b), backward)


def neg(a):
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda grad: (-grad,))


def power(a, exponent):
    """Elementwise a ** exponent for a constant exponent."""
    a = as_tensor(a)
    data = a.data ** exponent

    def backward(grad):
        return (grad * exponent * a.data ** (exponent - 1),)

    return _result(data, (a,), backward)


def exp(a):
    a = as_tensor(a)
    data = np.exp(a.data)
    return _result(data, (a,), lambda grad: (grad * data,))


def log(a, eps=LOG_EPS):
    """Natural log with inputs clamped to `eps`; clamped entries pass no
    gradient."""
    a = as_tensor(a)
    clamped = np.maximum(a.data, eps)

    def backward(grad):
        return (np.where(a.data > eps, grad / clamped, 0.0),)

    return _result(np.log(clamped), (a,), backward)


def tanh(a):
    a = as_tensor(a)
    data = np.tanh(a.data)
    return _result(data, (a,), lambda grad: (grad * (1.0 - data * data),))


def sigmoid(a):
    a = as_tensor(a)
    data = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result(data, (a,), lambda grad: (grad * data * (1.0 - data),))


def relu(a):
    a = as_tensor(a)
    active = a.data > 0
    return _result(a.data * active, (a,), lambda grad: (grad * active,))


def dropout(a, rate, rng):
    """Inverted dropout; identity when rate is 0 or recording is off."""
    if rate <= 0.0 or not is_grad_enabled():
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, keep)


def detach(a):
    return as_tensor(a).detach()


# shape ops


def matmul(a, b):
    """
    Batched matrix product over the last two axes with broadcasting of
    the leading axes, as `numpy.matmul`.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        data = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape)

    def backward(grad):
        grad_a = np.matmul(grad, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), grad)
        return unbroadcast(grad_a, a.shape), unbroadcast(grad_b, b.shape)

    return _result(data, (a, b), backward)


def concat(tensors, axis=-1):
    """Concatenate along `axis` (the feature axis by default)."""
    tensors = [as_tensor(tensor) for tensor in tensors]
    first = tensors[0]
    ndim = first.ndim
    axis = axis % ndim
    for tensor in tensors[1:]:
        if tensor.ndim != ndim or any(
            tensor.shape[i] != first.shape[i] for i in range(ndim) if i != axis
        ):
            raise ShapeError("concat", first.shape, tensor.shape)
    sizes = [tensor.shape[axis] for tensor in tensors]
    data = np.concatenate([tensor.data for tensor in tensors], axis=axis)

    def backward(grad):
        bounds = np.cumsum(sizes)[:-1]
        return tuple(np.split(grad, bounds, axis=axis))

    return _result(data, tensors, backward)


def reshape(a, shape):
    a = as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, shape)
    return _result(data, (a,), lambda grad: (grad.reshape(a.shape),))


def transpose(a, axes):
    a = as_tensor(a)
    inverse = np.argsort(axes)
    return _result(
        np.transpose(a.data, axes),
        (a,),
        lambda grad: (np.transpose(grad, inverse),),
    )


def swap_last(a):
    """Transpose of the last two axes."""
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, tuple(axes))


def _is_basic_index(index):
    parts = index if isinstance(index, tuple) else (index,)
    return all(
        part is None
        or part is Ellipsis
        or isinstance(part, (int, np.integer, slice))
        for part in parts
    )


def getitem(a, index):
    a = as_tensor(a)
    basic = _is_basic_index(index)

    def backward(grad):
        full = np.zeros_like(a.data)
        if basic:
            # basic indexing never repeats an element
            full[index] += grad
        else:
            np.add.at(full, index, grad)
        return (full,)

    return _result(a.data[index], (a,), backward)


# reductions


def reduce_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, a.shape).copy(),)

    return _result(data, (a,), backward)


def reduce_mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return div(reduce_sum(a, axis=axis, keepdims=keepdims), float(count))


def masked_mean(a, mask, axis):
    """
    Mean over `axis` counting only positions where mask is True.

    Args:
        a: (TensorValue) : B×L×d values
        mask: (array) : B×L booleans
        axis: (int) : the position axis

    Returns:
        (TensorValue) : B×d
    """
    mask = np.asarray(mask, dtype=DTYPE)
    weights = mask / np.maximum(mask.sum(axis=axis, keepdims=True), 1.0)
    return reduce_sum(mul(a, weights[..., None]), axis=axis)


# probability ops


def softmax(a, axis=-1, mask=None):
    """
    Softmax along `axis`. Entries where `mask` is False get exactly zero
    probability; a row with every entry masked is all zeros.
    """
    a = as_tensor(a)
    if mask is None:
        keep = np.ones(a.shape, dtype=bool)
    else:
        keep = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    shifted = np.where(keep, a.data, -np.inf)
    peak = shifted.max(axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    weights = np.where(keep, np.exp(np.where(keep, a.data, 0.0) - peak), 0.0)
    total = weights.sum(axis=axis, keepdims=True)
    data = weights / np.where(total > 0, total, 1.0)

    def backward(grad):
        inner = (grad * data).sum(axis=axis, keepdims=True)
        return (data * (grad - inner),)

    return _result(data, (a,), backward)


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    peak = a.data.max(axis=axis, keepdims=True)
    shifted = a.data - peak
    log_total = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - log_total

    def backward(grad):
        probs = np.exp(data)
        return (grad - probs * grad.sum(axis=axis, keepdims=True),)

    return _result(data, (a,), backward)


def normalize(a, axis=-1):
    """L2 normalization; zero vectors stay zero."""
    a = as_tensor(a)
    norm = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))
    safe = norm > 0
    denom = np.where(safe, norm, 1.0)
    data = np.where(safe, a.data / denom, 0.0)

    def backward(grad):
        inner = (grad * data).sum(axis=axis, keepdims=True)
        return (np.where(safe, (grad - data * inner) / denom, 0.0),)

    return _result(data, (a,), backward)


def cosine_similarity(a, b):
    """
    Cosine similarity of every row of `a` against every row of `b`.

    Rows with zero norm have similarity 0 with everything.

    Args:
        a: (TensorValue) : (..., n, d)
        b: (TensorValue) : (k, d) or (..., k, d)

    Returns:
        (TensorValue) : (..., n, k), entries in [-1, 1]
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[-1]:
        raise ShapeError("cosine_similarity", a.shape, b.shape)
    return matmul(normalize(a), swap_last(normalize(b)))


def pick(a, index):
    """Gather one entry per row along the last axis."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    if index.shape != a.shape[:-1]:
        raise ShapeError("pick", a.shape, index.shape)
    expanded = index[..., None]
    data = np.take_along_axis(a.data, expanded, axis=-1)[..., 0]

    def backward(grad):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, expanded, grad[..., None], axis=-1)
        return (full,)

    return _result(data, (a,), backward)


def embedding(table, ids, padding_idx=None):
    """
    Row lookup `table[ids]`. The `padding_idx` row never receives
    gradient.
    """
    ids = np.asarray(ids, dtype=np.int64)
    rows = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= rows):
        bad = int(ids.max()) if ids.max() >= rows else int(ids.min())
        raise DataError(
            f"token id {bad} out of range for an embedding of {rows} rows"
        )

    def backward(grad):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, grad)
        if padding_idx is not None:
            full[padding_idx] = 0.0
        return (full,)

    return _result(table.data[ids], (table,), backward)


def scatter_sum(src, index, size):
    """
    Scatter attention mass onto vocabulary ids.

    `out[b, t, index[b, l]] += src[b, t, l]`, so repeated ids sum their
    weights.

    Args:
        src: (TensorValue) : B×T×L weights
        index: (array) : B×L integer ids in [0, size)
        size: (int) : output vocabulary size

    Returns:
        (TensorValue) : B×T×size
    """
    src = as_tensor(src)
    index = np.asarray(index, dtype=np.int64)
    batch, steps, length = src.shape
    if index.shape != (batch, length):
        raise ShapeError("scatter_sum", src.shape, index.shape)
    rows = np.arange(batch)[:, None, None]
    cols = np.arange(steps)[None, :, None]
    ids = np.broadcast_to(index[:, None, :], src.shape)
    data = np.zeros((batch, steps, size), dtype=DTYPE)
    np.add.at(data, (rows, cols, ids), src.data)

    def backward(grad):
        return (grad[rows, cols, ids],)

    return _result(data, (src,), backward)


# losses


def cross_entropy(probs, target, mask=None):
    """
    Mean negative log-likelihood of `target` under `probs`.

    Args:
        probs: (TensorValue) : (..., C) probabilities
        target: (array) : (...) integer classes
        mask: (array : None) : (...) booleans; False entries are skipped

    Returns:
        (TensorValue) : scalar
    """
    nll = neg(log(pick(probs, target)))
    if mask is None:
        return reduce_mean(nll)
    mask = np.asarray(mask, dtype=DTYPE)
    return div(reduce_sum(mul(nll, mask)), max(mask.sum(), 1.0))


def soft_cross_entropy(target_probs, probs):
    """Batch mean of -sum_k q_k log p_k over the last axis."""
    terms = mul(as_tensor(target_probs), log(probs))
    return reduce_mean(neg(reduce_sum(terms, axis=-1)))
