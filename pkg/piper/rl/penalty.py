"""
The physics penalty on the actor: ‖M·Φ(s, π(s)) + b - π(s)‖², averaged over a batch.

Gradients reach the policy only. The proxy enters the tape with constant parameters
and M, b come from the oracle at the recorded states.
"""
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from piper.autodiff import tape as ops
from piper.autodiff.network import Gradients
from piper.autodiff.tape import Tape, Tensor
from piper.common.errors import ContractViolation
from piper.physics_losses import ResidualInputs, physics_penalty, physics_residual
from piper.pinn import PinnModel
from piper.rl.policy import GaussianPolicy

PENALTY_MODES = ('mean', 'sampled')


class PenaltyBatch(NamedTuple):
    obs: np.ndarray
    M: np.ndarray
    b: np.ndarray

    @classmethod
    def from_records(cls, records: Sequence) -> 'PenaltyBatch':
        return cls(np.stack([r.obs for r in records]), np.stack([r.oracle.M for r in records]),
                   np.stack([r.oracle.b for r in records]))


def penalty_term(tape: Tape, policy: GaussianPolicy, mean: Tensor, log_std: Tensor, pinn: PinnModel,
                 batch: PenaltyBatch, mode: str = 'mean', rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    Record the penalty on a tape that already holds the policy's (mean, log_std).

    mode='mean' differentiates through τ_max·tanh(mean); mode='sampled' through the
    reparameterized τ_max·tanh(mean + std·ε) with ε drawn from `rng`.
    """
    if mode == 'mean':
        raw = mean
    elif mode == 'sampled':
        if rng is None:
            raise ContractViolation("sampled penalty mode needs a random generator")
        raw = mean + ops.exp(log_std) * rng.standard_normal(mean.shape)
    else:
        raise ContractViolation(f"penalty mode must be one of {PENALTY_MODES}, got {mode!r}")
    action = policy.squash(raw)
    qdd_hat, _ = pinn.apply(tape, batch.obs, action, trainable=False)
    residual = physics_residual(ResidualInputs(batch.M, batch.b, qdd_hat, action))
    return ops.mean(physics_penalty(residual))


def piper_penalty(policy: GaussianPolicy, pinn: PinnModel, batch: PenaltyBatch, mode: str = 'mean',
                  rng: Optional[np.random.Generator] = None) -> Tuple[float, Gradients]:
    """Standalone L_phys and its gradient with respect to the policy parameters."""
    tape = Tape(policy.network.dtype)
    mean, log_std, params = policy.distribution(tape, batch.obs)
    loss = penalty_term(tape, policy, mean, log_std, pinn, batch, mode, rng)
    return float(loss.value), Gradients(tape.gradient(loss, params))
