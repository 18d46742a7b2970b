"""
Clipped-surrogate PPO with an optional physics penalty on the actor.
"""
import logging
from typing import Dict, NamedTuple, Optional

import numpy as np

from piper.autodiff import tape as ops
from piper.autodiff.network import Gradients, Network
from piper.autodiff.optim import AdamState, adam_step, clip_grad_norm
from piper.autodiff.tape import Tape, Tensor
from piper.common.errors import TrainingAbortedError
from piper.pinn import PinnModel
from piper.rl.buffers import RolloutBuffer, gae_advantages
from piper.rl.penalty import PenaltyBatch, penalty_term
from piper.rl.policy import GaussianPolicy, gaussian_entropy, log_prob


class PpoParams(NamedTuple):
    rollout_length: int = 1000
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    lr: float = 3e-4
    epochs: int = 10
    minibatch_size: int = 64
    max_grad_norm: Optional[float] = 0.5


def clipped_surrogate(ratio: Tensor, advantages, clip: float) -> Tensor:
    """Per-sample min(ratio·A, clip(ratio, 1-ε, 1+ε)·A)."""
    return ops.minimum(ratio * advantages, ops.clip(ratio, 1.0 - clip, 1.0 + clip) * advantages)


def ppo_update(policy: GaussianPolicy, value_net: Network, rollout: RolloutBuffer, params: PpoParams,
               policy_adam: AdamState, value_adam: AdamState, rng: np.random.Generator,
               pinn: Optional[PinnModel] = None, lambda_phys: float = 0.0, penalty_mode: str = 'mean',
               penalty_rng: Optional[np.random.Generator] = None) -> Dict[str, float]:
    """
    Several epochs of minibatch Adam steps on -L_CLIP + c1·L_VF - c2·H + λ_phys·L_phys.

    With lambda_phys == 0 the penalty is never recorded and no penalty random numbers
    are drawn, so the update is the plain PPO update bit for bit.

    Raises:
        TrainingAbortedError: if a minibatch loss is not finite
    """
    advantages, returns = gae_advantages(rollout, params.gamma, params.gae_lambda)
    records = rollout.records
    obs = np.stack([r.obs for r in records])
    raws = np.stack([r.raw for r in records])
    old_log_probs = np.array([r.log_prob for r in records])
    use_penalty = lambda_phys > 0 and pinn is not None
    penalty_batch = PenaltyBatch.from_records(records) if use_penalty else None

    totals = {'policy_loss': 0.0, 'value_loss': 0.0, 'entropy': 0.0, 'l_phys': 0.0, 'clip_fraction': 0.0}
    n_updates = 0
    n = len(records)
    for _ in range(params.epochs):
        order = rng.permutation(n)
        for start in range(0, n, params.minibatch_size):
            idx = order[start:start + params.minibatch_size]
            adv = advantages[idx]
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)

            tape = Tape(policy.network.dtype)
            mean, log_std, policy_params = policy.distribution(tape, obs[idx])
            ratio = ops.exp(log_prob(policy, mean, log_std, raws[idx]) - old_log_probs[idx])
            surrogate = ops.mean(clipped_surrogate(ratio, adv, params.clip))
            entropy = ops.mean(gaussian_entropy(log_std))
            actor_loss = -surrogate - params.entropy_coef * entropy
            l_phys = None
            if use_penalty:
                batch = PenaltyBatch(penalty_batch.obs[idx], penalty_batch.M[idx], penalty_batch.b[idx])
                l_phys = penalty_term(tape, policy, mean, log_std, pinn, batch, penalty_mode, penalty_rng)
                actor_loss = actor_loss + lambda_phys * l_phys

            values, value_params = value_net.apply(tape, tape.constant(obs[idx]))
            value_loss = ops.mean(ops.square(values[..., 0] - returns[idx]))
            loss = actor_loss + params.value_coef * value_loss

            if not np.isfinite(loss.value):
                diagnostics = {'component': 'ppo', 'loss': float(loss.value), 'surrogate': float(surrogate.value),
                               'value_loss': float(value_loss.value),
                               'l_phys': None if l_phys is None else float(l_phys.value)}
                logging.error(f"PPO loss is not finite: {diagnostics}")
                raise TrainingAbortedError("PPO loss is not finite", diagnostics)

            grads = tape.gradient(loss, policy_params + value_params)
            policy_grads, _ = clip_grad_norm(Gradients(grads[:len(policy_params)]), params.max_grad_norm)
            value_grads, _ = clip_grad_norm(Gradients(grads[len(policy_params):]), params.max_grad_norm)
            adam_step(policy.network, policy_grads, policy_adam)
            adam_step(value_net, value_grads, value_adam)

            totals['policy_loss'] += float(-surrogate.value)
            totals['value_loss'] += float(value_loss.value)
            totals['entropy'] += float(entropy.value)
            totals['l_phys'] += 0.0 if l_phys is None else float(l_phys.value)
            totals['clip_fraction'] += float(np.mean(np.abs(ratio.value - 1.0) > params.clip))
            n_updates += 1

    report = {k: v / max(n_updates, 1) for k, v in totals.items()}
    if not use_penalty:
        report['l_phys'] = float('nan')
    logging.debug(f"PPO update: {report}")
    return report
