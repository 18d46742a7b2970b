"""
Soft actor-critic with twin Q networks, Polyak targets and automatic temperature tuning.
"""
import logging
from typing import Dict, NamedTuple, Optional

import numpy as np

from piper.autodiff import tape as ops
from piper.autodiff.network import Gradients, Network
from piper.autodiff.optim import AdamState, adam_step, clip_grad_norm
from piper.autodiff.tape import Tape
from piper.common.errors import ContractViolation, TrainingAbortedError
from piper.pinn import PinnModel
from piper.rl.buffers import ReplayBuffer
from piper.rl.penalty import PenaltyBatch, penalty_term
from piper.rl.policy import GaussianPolicy, log_prob


class SacParams(NamedTuple):
    gamma: float = 0.99
    tau: float = 0.005
    lr: float = 3e-4
    alpha_lr: float = 3e-4
    batch_size: int = 2048
    learning_starts: int = 1000
    update_every: int = 1
    init_alpha: float = 0.2
    target_entropy: Optional[float] = None   # defaults to -N
    max_grad_norm: Optional[float] = None


class Temperature:
    """Entropy coefficient α = exp(log α), optimized in log space."""

    def __init__(self, alpha: float):
        self.params = [np.array(np.log(alpha))]

    @property
    def alpha(self) -> float:
        return float(np.exp(self.params[0]))


class TwinCritics:
    """Q1, Q2 over (obs, action/τ_max) plus their Polyak-averaged targets."""

    def __init__(self, q1: Network, q2: Network, torque_limits):
        self.q1, self.q2 = q1, q2
        self.q1_target, self.q2_target = q1.copy(), q2.copy()
        self.torque_limits = np.asarray(torque_limits, dtype=np.float64)

    @classmethod
    def create(cls, obs_size: int, torque_limits, hidden, rng: np.random.Generator,
               activation: str = 'tanh') -> 'TwinCritics':
        sizes = [obs_size + len(torque_limits), *hidden, 1]
        return cls(Network.initialize(sizes, rng, activation), Network.initialize(sizes, rng, activation),
                   torque_limits)

    def inputs(self, tape: Tape, obs, action):
        action = tape.constant(action) if isinstance(action, np.ndarray) else action
        return ops.concat([tape.constant(obs), action / self.torque_limits], axis=-1)

    def target_value(self, obs, action) -> np.ndarray:
        """min(Q1', Q2') for array inputs."""
        tape = Tape()
        x = self.inputs(tape, obs, action)
        q1, _ = self.q1_target.apply(tape, x, trainable=False)
        q2, _ = self.q2_target.apply(tape, x, trainable=False)
        return np.minimum(q1.value[..., 0], q2.value[..., 0])

    def polyak(self, tau: float) -> None:
        if not 0.0 < tau < 1.0:
            raise ContractViolation(f"Polyak factor must lie in (0, 1), got {tau}")
        for online, target in ((self.q1, self.q1_target), (self.q2, self.q2_target)):
            target.params = [(1.0 - tau) * t + tau * o for t, o in zip(target.params, online.params)]


def _abort(diagnostics: Dict[str, float]) -> None:
    logging.error(f"SAC loss is not finite: {diagnostics}")
    raise TrainingAbortedError("SAC loss is not finite", diagnostics)


def sac_update(policy: GaussianPolicy, critics: TwinCritics, temperature: Temperature, replay: ReplayBuffer,
               params: SacParams, policy_adam: AdamState, q1_adam: AdamState, q2_adam: AdamState,
               alpha_adam: AdamState, rng: np.random.Generator, pinn: Optional[PinnModel] = None,
               lambda_phys: float = 0.0, penalty_mode: str = 'mean',
               penalty_rng: Optional[np.random.Generator] = None) -> Dict[str, float]:
    """
    One SAC iteration: twin-critic TD step, actor step (plus λ_phys·L_phys), temperature
    step toward the target entropy, then a Polyak update of the targets.

    Raises:
        ContractViolation: if the replay holds fewer transitions than one batch
        TrainingAbortedError: if a loss is not finite
    """
    if len(replay) < params.batch_size:
        raise ContractViolation(f"replay holds {len(replay)} transitions, batch needs {params.batch_size}")
    records = replay.sample(rng, params.batch_size)
    obs = np.stack([r.obs for r in records])
    actions = np.stack([r.action for r in records])
    rewards = np.array([r.reward for r in records])
    next_obs = np.stack([r.next_obs for r in records])
    not_terminal = 1.0 - np.array([r.terminal for r in records], dtype=np.float64)
    alpha = temperature.alpha
    target_entropy = -float(policy.n_actions) if params.target_entropy is None else params.target_entropy

    # soft TD target from the twin-min of the target critics
    next_mean, next_log_std, _ = policy.distribution(Tape(), next_obs, trainable=False)
    next_mean, next_log_std = next_mean.value, next_log_std.value
    next_raw = next_mean + np.exp(next_log_std) * rng.standard_normal(next_mean.shape)
    next_log_prob = log_prob(policy, next_mean, next_log_std, next_raw)
    soft_next = critics.target_value(next_obs, policy.squash(next_raw)) - alpha * next_log_prob
    targets = rewards + params.gamma * not_terminal * soft_next

    tape = Tape()
    x = critics.inputs(tape, obs, actions)
    q1, q1_params = critics.q1.apply(tape, x)
    q2, q2_params = critics.q2.apply(tape, x)
    q1_loss = ops.mean(ops.square(q1[..., 0] - targets))
    q2_loss = ops.mean(ops.square(q2[..., 0] - targets))
    critic_loss = q1_loss + q2_loss
    if not np.isfinite(critic_loss.value):
        _abort({'component': 'sac_critic', 'loss': float(critic_loss.value)})
    grads = tape.gradient(critic_loss, q1_params + q2_params)
    g1, _ = clip_grad_norm(Gradients(grads[:len(q1_params)]), params.max_grad_norm)
    g2, _ = clip_grad_norm(Gradients(grads[len(q1_params):]), params.max_grad_norm)
    adam_step(critics.q1, g1, q1_adam)
    adam_step(critics.q2, g2, q2_adam)

    # actor on the reparameterized action; critics are constants here
    tape = Tape()
    mean, log_std, policy_params = policy.distribution(tape, obs)
    raw = mean + ops.exp(log_std) * rng.standard_normal(mean.shape)
    action = policy.squash(raw)
    action_log_prob = log_prob(policy, mean, log_std, raw)
    x = critics.inputs(tape, obs, action)
    q1_pi, _ = critics.q1.apply(tape, x, trainable=False)
    q2_pi, _ = critics.q2.apply(tape, x, trainable=False)
    actor_loss = ops.mean(alpha * action_log_prob - ops.minimum(q1_pi, q2_pi)[..., 0])
    l_phys = None
    if lambda_phys > 0 and pinn is not None:
        l_phys = penalty_term(tape, policy, mean, log_std, pinn, PenaltyBatch.from_records(records),
                              penalty_mode, penalty_rng)
        actor_loss = actor_loss + lambda_phys * l_phys
    if not np.isfinite(actor_loss.value):
        _abort({'component': 'sac_actor', 'loss': float(actor_loss.value),
                'l_phys': None if l_phys is None else float(l_phys.value)})
    policy_grads, _ = clip_grad_norm(Gradients(tape.gradient(actor_loss, policy_params)), params.max_grad_norm)
    adam_step(policy.network, policy_grads, policy_adam)

    # d/d(log α) of -log α·(log π + H̄)
    entropy_gap = float(np.mean(action_log_prob.value) + target_entropy)
    adam_step(temperature, Gradients([np.array(-entropy_gap)]), alpha_adam)

    critics.polyak(params.tau)
    report = {
        'critic_loss': float(critic_loss.value),
        'actor_loss': float(actor_loss.value),
        'alpha': alpha,
        'entropy': float(-np.mean(action_log_prob.value)),
        'l_phys': float('nan') if l_phys is None else float(l_phys.value),
    }
    logging.debug(f"SAC update: {report}")
    return report
