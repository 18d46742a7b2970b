"""
Tanh-squashed Gaussian policy over joint torques.
"""
from typing import NamedTuple, Tuple

import numpy as np

from piper.autodiff import tape as ops
from piper.autodiff.network import Network
from piper.autodiff.tape import Tape, Tensor

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_LOG_2PI = float(np.log(2.0 * np.pi))
_LOG_2 = float(np.log(2.0))


class GaussianPolicy:
    """
    Network obs -> (mean, log_std), each of size N. Actions are τ_max·tanh(u) with
    u ~ N(mean, exp(log_std)²); log_std is clamped to [LOG_STD_MIN, LOG_STD_MAX].
    """

    def __init__(self, network: Network, torque_limits):
        self.network = network
        self.torque_limits = np.asarray(torque_limits, dtype=np.float64)
        self.n_actions = self.torque_limits.shape[0]
        if network.output_size != 2 * self.n_actions:
            raise ValueError(f"policy network must output {2 * self.n_actions} values, got {network.output_size}")

    @classmethod
    def create(cls, obs_size: int, torque_limits, hidden, rng: np.random.Generator,
               activation: str = 'tanh') -> 'GaussianPolicy':
        n = len(torque_limits)
        network = Network.initialize([obs_size, *hidden, 2 * n], rng, activation, output_scale=0.01)
        return cls(network, torque_limits)

    def copy(self) -> 'GaussianPolicy':
        return GaussianPolicy(self.network.copy(), self.torque_limits)

    def distribution(self, tape: Tape, obs, trainable: bool = True):
        """Record the network; returns (mean, log_std, params) tensors."""
        obs = obs if isinstance(obs, Tensor) else tape.constant(obs)
        out, params = self.network.apply(tape, obs, trainable=trainable)
        n = self.n_actions
        mean = out[..., :n]
        log_std = ops.clip(out[..., n:], LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std, params

    def squash(self, raw):
        """τ_max·tanh(u) for a Tensor or an array."""
        if isinstance(raw, Tensor):
            return ops.tanh(raw) * self.torque_limits
        return np.tanh(raw) * self.torque_limits


def _log_one_minus_tanh_sq(u):
    # log(1 - tanh²u) = 2·(log 2 - u - softplus(-2u)), stable for large |u|
    if isinstance(u, Tensor):
        return 2.0 * (_LOG_2 - u - ops.softplus(-2.0 * u))
    return 2.0 * (_LOG_2 - u - np.logaddexp(0.0, -2.0 * u))


def log_prob(policy: GaussianPolicy, mean, log_std, raw):
    """
    Log-density of the squashed action τ_max·tanh(raw), summed over action dimensions.
    Works on tensors (for gradients) or arrays.
    """
    if isinstance(mean, Tensor):
        std = ops.exp(log_std)
        z = (raw - mean) / std
        gaussian = -0.5 * ops.square(z) - log_std - 0.5 * _LOG_2PI
        per_dim = gaussian - _log_one_minus_tanh_sq(raw) - np.log(policy.torque_limits)
        return ops.total(per_dim, axis=-1)
    z = (raw - mean) / np.exp(log_std)
    gaussian = -0.5 * z * z - log_std - 0.5 * _LOG_2PI
    return np.sum(gaussian - _log_one_minus_tanh_sq(raw) - np.log(policy.torque_limits), axis=-1)


def gaussian_entropy(log_std: Tensor) -> Tensor:
    """Entropy of the pre-squash Gaussian, summed over action dimensions."""
    return ops.total(log_std + 0.5 * (_LOG_2PI + 1.0), axis=-1)


class ActionSample(NamedTuple):
    action: np.ndarray
    log_prob: np.ndarray
    raw: np.ndarray


def sample_action(policy: GaussianPolicy, obs, rng: np.random.Generator, deterministic: bool = False) -> ActionSample:
    """
    Draw an action for one observation or a batch of observations.

    With `deterministic` the action is τ_max·tanh(mean) and no random numbers are consumed.
    """
    mean, log_std, _ = policy.distribution(Tape(), np.asarray(obs, dtype=np.float64), trainable=False)
    mean, log_std = mean.value, log_std.value
    if deterministic:
        raw = mean
    else:
        raw = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    return ActionSample(policy.squash(raw), log_prob(policy, mean, log_std, raw), raw)
