"""
Adam and global gradient-norm clipping.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from piper.autodiff.network import Gradients, Network


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_network(cls, net: Network, lr: float, **kwargs) -> 'AdamState':
        return cls(lr=lr, m=[np.zeros_like(p) for p in net.params], v=[np.zeros_like(p) for p in net.params],
                   **kwargs)


def adam_step(net: Network, grads: Gradients, state: AdamState) -> Tuple[Network, AdamState]:
    """
    One bias-corrected Adam update, applied to `net` in place.

    Returns the same network and state objects for chaining.
    """
    grads.check_congruent(net)
    if not state.m:
        state.m = [np.zeros_like(p) for p in net.params]
        state.v = [np.zeros_like(p) for p in net.params]
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for i, g in enumerate(grads):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / correction1
        v_hat = state.v[i] / correction2
        net.params[i] = net.params[i] - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return net, state


def clip_grad_norm(grads: Gradients, max_norm: Optional[float]) -> Tuple[Gradients, float]:
    """Rescale so the global L2 norm is at most max_norm (None disables clipping); returns the original norm."""
    norm = grads.norm()
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return grads, norm
    return grads.scaled(max_norm / norm), norm
