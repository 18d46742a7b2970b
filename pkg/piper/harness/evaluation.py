"""
Deterministic evaluation episodes and the task-constraint diagnostics computed from them.
"""
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from piper.dynamics.rigid_body import forward_kinematics
from piper.harness.metrics import EpisodeRow
from piper.physics_losses import (ConstraintWeights, ResidualInputs, friction_work_accumulate, physics_residual,
                                  push_loss, reach_loss, slide_loss)
from piper.oracle import extract
from piper.pinn import PinnModel, predict_accel
from piper.rl.policy import GaussianPolicy, sample_action
from piper.sim import envs
from piper.sim.spec import PUSH2D, REACH2D, SLIDE2D, EnvSpec


class EpisodeOutcome(NamedTuple):
    success: bool
    final_error: float
    constraint: float


class EvaluationResult(NamedTuple):
    success_rate: float
    mean_final_error: float
    episodes: List[EpisodeRow]
    constraint: float


def _reach_constraint(spec: EnvSpec, world, goal, obs, action, contact, weights, pinn) -> float:
    r_dyn = np.zeros(spec.chain.n_links)
    if pinn is not None:
        M, b, _ = extract(spec, world, contact)
        r_dyn = physics_residual(ResidualInputs(M, b, predict_accel(pinn, obs, action), action))
    return reach_loss(r_dyn, forward_kinematics(spec.chain, world.arm.q), np.asarray(goal), weights)


def _kinetic(spec: EnvSpec, world) -> float:
    return 0.5 * spec.object_mass * float(world.object_vel @ world.object_vel)


def run_episode(spec: EnvSpec, policy: GaussianPolicy, seed: int, weights: ConstraintWeights = ConstraintWeights(),
                pinn: Optional[PinnModel] = None) -> EpisodeOutcome:
    """
    Roll out the deterministic policy for one horizon.

    The constraint diagnostic is the task's own loss: reach_loss at the final state for
    reach2d, push_loss over the whole episode window for push2d, and the mean
    slide_loss over completed contact events for slide2d.
    """
    world, goal = envs.reset(spec, seed)
    start_kinetic = _kinetic(spec, world) if spec.has_object else 0.0
    friction_work = 0.0
    contact_work = 0.0
    event_losses = []
    previous = None
    obs = action = None
    for _ in range(spec.horizon):
        obs = envs.observe(spec, world, goal)
        action = sample_action(policy, obs, None, deterministic=True).action
        start = world
        world, contact = envs.advance(spec, world, action)
        friction_work = friction_work_accumulate(friction_work, contact)
        contact_work += contact.contact_work_increment
        if spec.env_id == SLIDE2D and previous is not None and previous.in_contact and not contact.in_contact:
            delta_v = world.object_vel - contact.event_start_velocity
            event_losses.append(slide_loss(0.0, spec.object_mass, delta_v, contact.ee_object_impulse,
                                           weights.momentum))
        previous = contact

    if spec.env_id == REACH2D:
        constraint = _reach_constraint(spec, start, goal, obs, action, contact, weights, pinn)
    elif spec.env_id == PUSH2D:
        constraint = push_loss(0.0, friction_work, _kinetic(spec, world) - start_kinetic, weights.friction,
                               contact_work)
    else:
        constraint = float(np.mean(event_losses)) if event_losses else 0.0
    return EpisodeOutcome(envs.success(spec, world, goal), envs.final_error(spec, world, goal), float(constraint))


def evaluate_policy(spec: EnvSpec, policy: GaussianPolicy, episode_seeds: Sequence[int], step: int,
                    weights: ConstraintWeights = ConstraintWeights(), pinn: Optional[PinnModel] = None
                    ) -> EvaluationResult:
    outcomes = [run_episode(spec, policy, int(s), weights, pinn) for s in episode_seeds]
    episodes = [EpisodeRow(step, i, o.success, o.final_error) for i, o in enumerate(outcomes)]
    return EvaluationResult(
        success_rate=float(np.mean([o.success for o in outcomes])),
        mean_final_error=float(np.mean([o.final_error for o in outcomes])),
        episodes=episodes,
        constraint=float(np.mean([o.constraint for o in outcomes])),
    )


def summarize_episodes(episodes: Sequence[EpisodeRow]) -> Dict[str, float]:
    return {
        'success_rate': float(np.mean([e.success for e in episodes])),
        'final_error_m': float(np.mean([e.final_error_m for e in episodes])),
    }
