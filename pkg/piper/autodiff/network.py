"""
Dense multilayer perceptrons on the tape, their gradients, and finite-difference checks.
"""
import hashlib
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from piper.autodiff import tape as ops
from piper.autodiff.tape import Tape, Tensor
from piper.common.errors import ContractViolation

ACTIVATIONS = {
    'tanh': ops.tanh,
    'relu': ops.relu,
}


class Gradients:
    """Per-parameter gradient arrays, congruent with the owning Network's `params`."""

    def __init__(self, arrays: Sequence[np.ndarray]):
        self.arrays = [np.asarray(a) for a in arrays]

    @classmethod
    def zeros_like(cls, net: 'Network') -> 'Gradients':
        return cls([np.zeros_like(p) for p in net.params])

    def __iter__(self):
        return iter(self.arrays)

    def __len__(self):
        return len(self.arrays)

    def __add__(self, other: 'Gradients') -> 'Gradients':
        return Gradients([a + b for a, b in zip(self.arrays, other.arrays)])

    def scaled(self, factor: float) -> 'Gradients':
        return Gradients([a * factor for a in self.arrays])

    def dot(self, other: 'Gradients') -> float:
        return float(sum(np.sum(a * b) for a, b in zip(self.arrays, other.arrays)))

    def norm(self) -> float:
        return float(np.sqrt(self.dot(self)))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays)

    def check_congruent(self, net: 'Network') -> None:
        shapes = [a.shape for a in self.arrays]
        expected = [p.shape for p in net.params]
        if shapes != expected:
            raise ContractViolation(f"gradient shapes {shapes} do not match parameters {expected}")


class Network:
    """
    Fully connected network: hidden layers use `activation`, the output layer is linear.

    `params` alternates weights (fan_in x fan_out) and biases (fan_out,).
    """

    def __init__(self, sizes: Sequence[int], activation: str = 'tanh', params: Optional[List[np.ndarray]] = None,
                 dtype=np.float64):
        if len(sizes) < 2 or any(int(s) < 1 for s in sizes):
            raise ContractViolation(f"layer sizes must be >= 2 positive integers, got {list(sizes)}")
        if activation not in ACTIVATIONS:
            raise ContractViolation(f"activation must be one of {sorted(ACTIVATIONS)}, got {activation!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.activation = activation
        self.dtype = np.dtype(dtype)
        if params is None:
            params = [np.zeros(shape, dtype=self.dtype) for shape in self.param_shapes()]
        self.params = [np.array(p, dtype=self.dtype) for p in params]
        if [p.shape for p in self.params] != self.param_shapes():
            raise ContractViolation(f"parameter shapes do not match layer sizes {self.sizes}")

    @classmethod
    def initialize(cls, sizes: Sequence[int], rng: np.random.Generator, activation: str = 'tanh',
                   output_scale: float = 1.0, dtype=np.float64) -> 'Network':
        """
        Scaled uniform fan-in initialization: Glorot bounds for tanh, He bounds for relu.
        Biases start at zero; the output layer is multiplied by `output_scale`.
        """
        net = cls(sizes, activation, dtype=dtype)
        n_layers = len(net.sizes) - 1
        for layer, (fan_in, fan_out) in enumerate(zip(net.sizes[:-1], net.sizes[1:])):
            if activation == 'relu':
                bound = np.sqrt(6.0 / fan_in)
            else:
                bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            if layer == n_layers - 1:
                weights = weights * output_scale
            net.params[2 * layer] = weights.astype(net.dtype)
        return net

    def param_shapes(self) -> List[Tuple[int, ...]]:
        shapes = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        return shapes

    @property
    def param_count(self) -> int:
        return sum((fan_in + 1) * fan_out for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]))

    @property
    def input_size(self) -> int:
        return self.sizes[0]

    @property
    def output_size(self) -> int:
        return self.sizes[-1]

    def copy(self) -> 'Network':
        return Network(self.sizes, self.activation, [p.copy() for p in self.params], self.dtype)

    def with_params(self, params: Sequence[np.ndarray]) -> 'Network':
        return Network(self.sizes, self.activation, list(params), self.dtype)

    def fingerprint(self) -> str:
        """Stable digest of the parameters, used to assert that a call left a network untouched."""
        digest = hashlib.sha256()
        for p in self.params:
            digest.update(np.ascontiguousarray(p).tobytes())
        return digest.hexdigest()

    def apply(self, tape: Tape, x: Tensor, trainable: bool = True) -> Tuple[Tensor, List[Tensor]]:
        """
        Record the network on `tape` for input tensor x (shape (..., input_size)).

        Returns the output tensor and the parameter tensors; with trainable=False the
        parameters enter as constants and receive no gradient.
        """
        if x.shape[-1] != self.input_size:
            raise ContractViolation(f"expected input of size {self.input_size}, got shape {x.shape}")
        lift = tape.variable if trainable else tape.constant
        params = [lift(p) for p in self.params]
        activation = ACTIVATIONS[self.activation]
        h = x
        n_layers = len(self.sizes) - 1
        for layer in range(n_layers):
            h = ops.matmul(h, params[2 * layer]) + params[2 * layer + 1]
            if layer < n_layers - 1:
                h = activation(h)
        return h, params

    def __call__(self, x) -> np.ndarray:
        out, _ = forward(self, x)
        return out


class Trace(NamedTuple):
    tape: Tape
    input: Tensor
    params: List[Tensor]
    output: Tensor


def forward(net: Network, x) -> Tuple[np.ndarray, Trace]:
    """Evaluate the network on x (a vector or a batch of rows) and keep the tape for backward."""
    tape = Tape(net.dtype)
    x = np.asarray(x, dtype=net.dtype)
    if x.ndim < 1 or x.shape[-1] != net.input_size:
        raise ContractViolation(f"expected input of size {net.input_size}, got shape {x.shape}")
    inp = tape.variable(x)
    out, params = net.apply(tape, inp)
    return out.value, Trace(tape, inp, params, out)


def backward(trace: Trace, cotangent) -> Tuple[Gradients, np.ndarray]:
    """
    Reverse sweep through a forward trace.

    Returns:
        parameter Gradients and the cotangent of the network input

    Raises:
        ContractViolation: if the cotangent shape does not match the output
    """
    grads = trace.tape.gradient(trace.output, trace.params + [trace.input], cotangent)
    return Gradients(grads[:-1]), grads[-1]


def check_gradients(loss: Callable[[List[np.ndarray]], Tuple[float, List[np.ndarray]]],
                    point: Sequence[np.ndarray], rng: np.random.Generator, directions: int = 100,
                    h: float = 1e-5, floor: float = 1e-8) -> float:
    """
    Maximum relative error between analytic directional derivatives and central differences.

    Args:
        loss: maps a list of arrays to (value, gradient arrays)
        point: where to evaluate
        rng: draws the random unit directions
        directions: number of directions to test
        h: finite-difference step along each direction
        floor: denominators never drop below this value

    Returns:
        max over directions of |analytic - numeric| / max(|analytic|, |numeric|, floor)
    """
    point = [np.asarray(p, dtype=np.float64) for p in point]
    _, grads = loss(point)
    worst = 0.0
    for _ in range(directions):
        direction = [rng.standard_normal(p.shape) for p in point]
        scale = np.sqrt(sum(np.sum(d * d) for d in direction))
        direction = [d / scale for d in direction]
        analytic = float(sum(np.sum(g * d) for g, d in zip(grads, direction)))
        plus, _ = loss([p + h * d for p, d in zip(point, direction)])
        minus, _ = loss([p - h * d for p, d in zip(point, direction)])
        numeric = (plus - minus) / (2.0 * h)
        error = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        worst = max(worst, error)
    return worst


def grad_check(net: Network, loss: Callable[[Network], Tuple[float, Gradients]], rng: np.random.Generator,
               directions: int = 100, h: float = 1e-5) -> float:
    """check_gradients over the parameters of `net` for a loss functional of the network."""
    def over_params(params):
        value, grads = loss(net.with_params(params))
        return value, grads.arrays

    return check_gradients(over_params, net.params, rng, directions=directions, h=h)
