"""Reverse-mode automatic differentiation over the tensor kernels.

A ``Variable`` wraps a numpy array; every op records a graph node with a
backward rule as it computes (dynamic tape). ``backward`` walks the tape
once in reverse topological order, accumulating gradients by summation
into each contributing Variable.
"""

import contextlib
from dataclasses import dataclass, field

import numpy as np

from . import tensor


class TapeConsumedError(RuntimeError):
    """backward() was invoked twice on the same recorded graph."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference / numeric probing)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Node:
    __slots__ = ("op", "inputs", "backward_fn", "calls", "consumed")

    def __init__(self, op, inputs, backward_fn):
        self.op = op
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.calls = 0
        self.consumed = False


class Variable:
    """Value plus lazily-materialized gradient and the producing node."""

    def __init__(self, value, requires_grad=False, name=None):
        self.value = np.asarray(value)
        self.grad = None
        self.requires_grad = requires_grad
        self.node = None
        self.name = name
        self.no_decay = False

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Variable(self.value)

    def __repr__(self):
        tag = self.name or (self.node.op if self.node else "leaf")
        return f"Variable({tag}, shape={self.value.shape})"


def as_variable(x, dtype=None):
    if isinstance(x, Variable):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Variable(arr)


def _from_op(op, value, inputs, backward_fn):
    out = Variable(value)
    if _grad_enabled and any(v.requires_grad for v in inputs):
        out.requires_grad = True
        out.node = Node(op, inputs, backward_fn)
    return out


def _unbroadcast(g, shape):
    """Reduce a broadcasted gradient back to the operand's shape."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# differentiable ops
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = as_variable(a), as_variable(b)
    value = a.value + b.value

    def bwd(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)

    return _from_op("add", value, [a, b], bwd)


def sub(a, b):
    a, b = as_variable(a), as_variable(b)
    value = a.value - b.value

    def bwd(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)

    return _from_op("sub", value, [a, b], bwd)


def mul(a, b):
    a, b = as_variable(a), as_variable(b)
    value = a.value * b.value
    av, bv = a.value, b.value

    def bwd(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return _from_op("mul", value, [a, b], bwd)


def div(a, b):
    a, b = as_variable(a), as_variable(b)
    value = a.value / b.value
    av, bv = a.value, b.value

    def bwd(g):
        return _unbroadcast(g / bv, av.shape), _unbroadcast(-g * av / (bv * bv), bv.shape)

    return _from_op("div", value, [a, b], bwd)


def sqrt(x):
    x = as_variable(x)
    value = np.sqrt(x.value)

    def bwd(g):
        return (g * 0.5 / value,)

    return _from_op("sqrt", value, [x], bwd)


def relu(x):
    x = as_variable(x)
    value = tensor.relu(x.value)
    mask = x.value > 0

    def bwd(g):
        return (g * mask,)

    return _from_op("relu", value, [x], bwd)


def mean(x, axis, keepdims=True):
    x = as_variable(x)
    value = x.value.mean(axis=axis, keepdims=keepdims)
    shape = x.value.shape
    count = x.value.size / value.size

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape) / count,)

    return _from_op("mean", value, [x], bwd)


def sum_all(x):
    x = as_variable(x)
    value = np.asarray(x.value.sum())
    shape = x.value.shape

    def bwd(g):
        return (np.broadcast_to(g, shape).astype(x.value.dtype, copy=True),)

    return _from_op("sum", value, [x], bwd)


def reshape(x, shape):
    x = as_variable(x)
    value = x.value.reshape(shape)
    orig = x.value.shape

    def bwd(g):
        return (g.reshape(orig),)

    return _from_op("reshape", value, [x], bwd)


def conv2d(x, kernel, stride=1, padding=0):
    x, kernel = as_variable(x), as_variable(kernel)
    value = tensor.conv2d(x.value, kernel.value, stride, padding)
    xv, kv = x.value, kernel.value

    def bwd(g):
        return (
            tensor.conv2d_input_grad(g, kv, xv.shape, stride, padding),
            tensor.conv2d_kernel_grad(g, xv, kv.shape, stride, padding),
        )

    return _from_op("conv2d", value, [x, kernel], bwd)


def matmul(a, b):
    a, b = as_variable(a), as_variable(b)
    value = tensor.matmul(a.value, b.value)
    av, bv = a.value, b.value

    def bwd(g):
        return g @ bv.T, av.T @ g

    return _from_op("matmul", value, [a, b], bwd)


def linear(x, weight, bias):
    """x @ weight.T + bias with weight laid out (out, in)."""
    x, weight, bias = as_variable(x), as_variable(weight), as_variable(bias)
    if x.value.ndim != 2 or x.value.shape[1] != weight.value.shape[1]:
        raise tensor.ShapeError(
            f"linear: input {x.value.shape} incompatible with weight {weight.value.shape}"
        )
    value = x.value @ weight.value.T + bias.value
    xv, wv = x.value, weight.value

    def bwd(g):
        return g @ wv, g.T @ xv, g.sum(axis=0)

    return _from_op("linear", value, [x, weight, bias], bwd)


def global_avg_pool(x):
    x = as_variable(x)
    value = tensor.global_avg_pool(x.value)
    n, c, h, w = x.value.shape

    def bwd(g):
        return (np.broadcast_to(g[:, :, None, None], (n, c, h, w)) / (h * w),)

    return _from_op("global_avg_pool", value, [x], bwd)


def softmax_cross_entropy(logits, labels):
    """Mean negative log-softmax likelihood over the batch (max-subtracted)."""
    logits = as_variable(logits)
    labels = np.asarray(labels)
    n, k = logits.value.shape
    if labels.shape != (n,):
        raise tensor.ShapeError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    z = logits.value - logits.value.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    value = np.asarray(-logp[np.arange(n), labels].mean())
    probs = np.exp(logp)

    def bwd(g):
        d = probs.copy()
        d[np.arange(n), labels] -= 1
        return (d * (g / n),)

    return _from_op("softmax_cross_entropy", value, [logits], bwd)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss):
    """Backpropagate from a scalar loss; returns {leaf Variable: gradient}."""
    if loss.value.size != 1:
        raise tensor.ShapeError(f"backward: loss must be scalar, got shape {loss.value.shape}")
    if loss.node is None:
        if loss.requires_grad:
            loss.grad = np.ones_like(loss.value)
            return {loss: loss.grad}
        return {}
    if loss.node.consumed:
        raise TapeConsumedError("backward() already ran on this graph")

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        var, expanded = stack.pop()
        if expanded:
            order.append(var)
            continue
        if id(var) in seen:
            continue
        seen.add(id(var))
        stack.append((var, True))
        if var.node is not None:
            for inp in var.node.inputs:
                if inp.requires_grad and id(inp) not in seen:
                    stack.append((inp, False))

    loss.grad = np.ones_like(loss.value)
    leaves = {}
    for var in reversed(order):
        if var.node is None:
            if var.requires_grad:
                leaves[var] = var.grad
            continue
        node = var.node
        grads = node.backward_fn(var.grad)
        node.calls += 1
        node.consumed = True
        for inp, g in zip(node.inputs, grads):
            if g is None or not inp.requires_grad:
                continue
            if inp.grad is None:
                inp.grad = np.zeros_like(inp.value)
            inp.grad += g
    return leaves


# ---------------------------------------------------------------------------
# finite-difference gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float
    passed: bool


@dataclass
class GradCheckReport:
    tol: float
    h: float
    entries: list = field(default_factory=list)

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    @property
    def max_rel_err(self):
        return max((e.max_rel_err for e in self.entries), default=0.0)


def grad_check(f, leaves, h=1e-3, tol=1e-4, names=None):
    """Compare analytic gradients of f(leaves) against central differences.

    ``leaves`` are the Variables to differentiate with respect to; their
    values are promoted to float64 in place for the duration of the check.
    ``f`` must rebuild the graph from the leaves on every call.
    """
    for v in leaves:
        v.requires_grad = True
        v.value = np.asarray(v.value, dtype=np.float64)
        v.grad = None

    loss = f(leaves)
    if loss.value.size != 1:
        raise tensor.ShapeError("grad_check: f must produce a scalar")
    backward(loss)
    analytic = [np.zeros_like(v.value) if v.grad is None else v.grad.copy() for v in leaves]

    def eval_loss():
        with_grad = f(leaves)
        return float(with_grad.value)

    report = GradCheckReport(tol=tol, h=h)
    for i, v in enumerate(leaves):
        numeric = np.zeros_like(v.value)
        flat = v.value.reshape(-1)
        num_flat = numeric.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = eval_loss()
            flat[j] = orig - h
            fm = eval_loss()
            flat[j] = orig
            num_flat[j] = (fp - fm) / (2 * h)
        denom = np.maximum(1.0, np.maximum(np.abs(analytic[i]), np.abs(numeric)))
        err = float(np.max(np.abs(analytic[i] - numeric) / denom)) if flat.size else 0.0
        name = names[i] if names else f"input{i}"
        report.entries.append(GradCheckEntry(name, err, err < tol))
    return report
