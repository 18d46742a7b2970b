"""
Reverse-mode automatic differentiation over dense numpy arrays.

Every operation appends its output to the tape it was created on, so the tape is
already in topological order and the reverse sweep is a single backwards walk.
"""
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from piper.common.errors import ContractViolation

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
VectorJacobian = Callable[[np.ndarray], np.ndarray]


class Tensor:
    """A value recorded on a tape together with the vector-Jacobian products to its parents."""
    __slots__ = ('value', 'tape', 'parents', 'requires_grad', 'index')
    # make numpy operands defer to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(self, value: np.ndarray, tape: 'Tape', parents: Tuple[Tuple['Tensor', VectorJacobian], ...] = (),
                 requires_grad: bool = False):
        self.value = value
        self.tape = tape
        self.parents = parents
        self.requires_grad = requires_grad
        self.index = tape.register(self)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

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

    def __getitem__(self, key):
        return take(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Linear record of tensors created during one forward evaluation."""

    def __init__(self, dtype=np.float64):
        self.dtype = dtype
        self.nodes: List[Tensor] = []

    def register(self, tensor: Tensor) -> int:
        self.nodes.append(tensor)
        return len(self.nodes) - 1

    def variable(self, value: ArrayLike) -> Tensor:
        return Tensor(np.array(value, dtype=self.dtype), self, requires_grad=True)

    def constant(self, value: ArrayLike) -> Tensor:
        return Tensor(np.asarray(value, dtype=self.dtype), self)

    def gradient(self, output: Tensor, wrt: Sequence[Tensor],
                 cotangent: Optional[ArrayLike] = None) -> List[np.ndarray]:
        """
        Vector-Jacobian product of `output` against every tensor in `wrt`.

        Args:
            output: tensor recorded on this tape
            wrt: tensors to differentiate against; constants get zero gradients
            cotangent: output cotangent, defaults to ones (the plain gradient of a scalar)

        Raises:
            ContractViolation: if the cotangent does not match the output shape
        """
        if output.tape is not self:
            raise ContractViolation("output was recorded on another tape")
        seed = np.ones_like(output.value) if cotangent is None else np.asarray(cotangent, dtype=self.dtype)
        if seed.shape != output.shape:
            raise ContractViolation(f"cotangent shape {seed.shape} does not match output shape {output.shape}")

        adjoints: Dict[int, np.ndarray] = {output.index: seed}
        for node in reversed(self.nodes[:output.index + 1]):
            adjoint = adjoints.get(node.index)
            if adjoint is None:
                continue
            for parent, vjp in node.parents:
                contribution = unbroadcast(vjp(adjoint), parent.shape)
                if parent.index in adjoints:
                    adjoints[parent.index] = adjoints[parent.index] + contribution
                else:
                    adjoints[parent.index] = contribution
        return [adjoints.get(t.index, np.zeros_like(t.value)) for t in wrt]


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    grad = np.asarray(grad)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _lift(x, tape: Tape) -> Tensor:
    return x if isinstance(x, Tensor) else tape.constant(x)


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Tensor):
            return x.tape
    raise ContractViolation("at least one operand must be a Tensor")


def _node(value: np.ndarray, tape: Tape, links: Sequence[Tuple[Tensor, VectorJacobian]]) -> Tensor:
    live = tuple((parent, vjp) for parent, vjp in links if parent.requires_grad)
    return Tensor(value, tape, live, requires_grad=bool(live))


def add(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    return _node(a.value + b.value, tape, [(a, lambda g: g), (b, lambda g: g)])


def sub(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    return _node(a.value - b.value, tape, [(a, lambda g: g), (b, lambda g: -g)])


def mul(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    return _node(a.value * b.value, tape, [(a, lambda g: g * b.value), (b, lambda g: g * a.value)])


def div(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    return _node(a.value / b.value, tape,
                 [(a, lambda g: g / b.value), (b, lambda g: -g * a.value / (b.value * b.value))])


def neg(a: Tensor) -> Tensor:
    return _node(-a.value, a.tape, [(a, lambda g: -g)])


def square(a: Tensor) -> Tensor:
    return _node(a.value * a.value, a.tape, [(a, lambda g: 2.0 * g * a.value)])


def matmul(x: Tensor, w) -> Tensor:
    """x (..., i) @ w (i, k) for a 2-D right operand; the batched case of a dense layer."""
    tape = _tape_of(x, w)
    x, w = _lift(x, tape), _lift(w, tape)
    if w.value.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ContractViolation(f"cannot multiply {x.shape} by {w.shape}")

    def grad_w(g):
        return x.value.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])

    return _node(x.value @ w.value, tape, [(x, lambda g: g @ w.value.T), (w, grad_w)])


def matvec(m, v) -> Tensor:
    """Batched matrix-vector product m (..., i, j) · v (..., j)."""
    tape = _tape_of(m, v)
    m, v = _lift(m, tape), _lift(v, tape)
    if m.shape[-1] != v.shape[-1]:
        raise ContractViolation(f"cannot multiply matrix {m.shape} by vector {v.shape}")
    return _node(np.einsum('...ij,...j->...i', m.value, v.value), tape, [
        (m, lambda g: np.einsum('...i,...j->...ij', g, v.value)),
        (v, lambda g: np.einsum('...ij,...i->...j', m.value, g)),
    ])


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)
    return _node(out, a.tape, [(a, lambda g: g * (1.0 - out * out))])


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return _node(np.where(mask, a.value, 0.0), a.tape, [(a, lambda g: g * mask)])


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.value)
    return _node(out, a.tape, [(a, lambda g: g * out)])


def log(a: Tensor) -> Tensor:
    return _node(np.log(a.value), a.tape, [(a, lambda g: g / a.value)])


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(a)) evaluated without overflow."""
    sigmoid = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return _node(np.logaddexp(0.0, a.value), a.tape, [(a, lambda g: g * sigmoid)])


def absolute(a: Tensor) -> Tensor:
    return _node(np.abs(a.value), a.tape, [(a, lambda g: g * np.sign(a.value))])


def clip(a: Tensor, low: float, high: float) -> Tensor:
    inside = (a.value >= low) & (a.value <= high)
    return _node(np.clip(a.value, low, high), a.tape, [(a, lambda g: g * inside)])


def minimum(a, b) -> Tensor:
    """Elementwise minimum; ties send the gradient to `a`."""
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    pick_a = a.value <= b.value
    return _node(np.where(pick_a, a.value, b.value), tape,
                 [(a, lambda g: g * pick_a), (b, lambda g: g * ~pick_a)])


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.value)
    return _node(out, a.tape, [(a, lambda g: 0.5 * g / out)])


def total(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    def vjp(g):
        if axis is None or keepdims:
            return np.broadcast_to(g, a.shape)
        return np.broadcast_to(np.expand_dims(g, axis), a.shape)

    return _node(np.sum(a.value, axis=axis, keepdims=keepdims), a.tape, [(a, vjp)])


def mean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    count = a.value.size if axis is None else a.shape[axis]
    return total(a, axis) / float(count)


def concat(parts: Sequence, axis: int = -1) -> Tensor:
    tape = _tape_of(*parts)
    parts = [_lift(p, tape) for p in parts]
    axis = axis % parts[0].value.ndim
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])
    links = []
    for part, start, stop in zip(parts, bounds[:-1], bounds[1:]):
        def vjp(g, start=start, stop=stop):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            return g[tuple(index)]

        links.append((part, vjp))
    return _node(np.concatenate([p.value for p in parts], axis=axis), tape, links)


def _basic_index(key) -> bool:
    parts = key if isinstance(key, tuple) else (key,)
    return all(isinstance(p, (int, slice)) or p is Ellipsis or p is None for p in parts)


def take(a: Tensor, key) -> Tensor:
    """Indexing; the gradient scatters back into a zero array of the source shape."""
    basic = _basic_index(key)

    def vjp(g):
        full = np.zeros_like(a.value)
        if basic:
            full[key] = g
        else:
            np.add.at(full, key, g)
        return full

    return _node(a.value[key], a.tape, [(a, vjp)])


def stop_gradient(a: Tensor) -> Tensor:
    return a.tape.constant(a.value)
