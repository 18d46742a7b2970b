"""
Episode protocol for the goal-conditioned environments: reset, observe, reward and success.

Observation layouts (N = number of links):
    reach2d:          [q (N), qd (N), ee_pos (2), goal (2)]
    push2d / slide2d: [q (N), qd (N), ee_pos (2), goal (2), object_pos (2), object_vel (2), ee - object (2)]
"""
from dataclasses import replace
from typing import NamedTuple, Optional, Tuple

import numpy as np

from piper.common.errors import ContractViolation
from piper.common.rng import generator
from piper.dynamics.model import JointState
from piper.dynamics.rigid_body import forward_kinematics
from piper.sim.spec import SLIDE2D, EnvSpec
from piper.sim.world import ContactRecord, WorldState, empty_contact, step

# Fraction of the reach kept free around the base and beyond the workspace edge for reach goals
_REACH_GOAL_BAND = (0.2, 0.9)


class Transition(NamedTuple):
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool
    contact: ContactRecord
    goal: np.ndarray


def observation_size(spec: EnvSpec) -> int:
    n = spec.chain.n_links
    return 2 * n + (10 if spec.has_object else 4)


def _sample_box(rng: np.random.Generator, box) -> np.ndarray:
    x_min, x_max, y_min, y_max = box
    return np.array([rng.uniform(x_min, x_max), rng.uniform(y_min, y_max)])


def _sample_goal(spec: EnvSpec, rng: np.random.Generator, object_pos: Optional[np.ndarray]) -> np.ndarray:
    reach = spec.chain.reach
    for _ in range(10000):
        goal = _sample_box(rng, spec.goal_region)
        radius = float(np.linalg.norm(goal))
        if spec.env_id == SLIDE2D:
            if radius > reach:
                return goal
        elif _REACH_GOAL_BAND[0] * reach <= radius <= _REACH_GOAL_BAND[1] * reach:
            if object_pos is None or np.linalg.norm(goal - object_pos) > spec.success_radius:
                return goal
    raise ContractViolation(f"goal_region {spec.goal_region} has no admissible goal for {spec.env_id}")


def reset(spec: EnvSpec, seed: int) -> Tuple[WorldState, np.ndarray]:
    """Deterministic initial world and goal for (spec, seed)."""
    rng = generator(seed)
    n = spec.chain.n_links
    q = np.asarray(spec.init_q, dtype=np.float64) + rng.uniform(-spec.init_noise, spec.init_noise, size=n)
    arm = JointState(q, np.zeros(n))

    object_pos = object_vel = None
    if spec.has_object:
        ee = forward_kinematics(spec.chain, q)
        clearance = spec.contact.ee_radius + spec.contact.object_radius
        for _ in range(10000):
            object_pos = _sample_box(rng, spec.object_region)
            if np.linalg.norm(object_pos - ee) > 2.0 * clearance:
                break
        else:
            raise ContractViolation(f"object_region {spec.object_region} keeps the object within {2.0 * clearance} "
                                    f"of the end effector at {ee.tolist()}")
        object_vel = np.zeros(2)

    goal = _sample_goal(spec, rng, object_pos)
    world = WorldState(arm=arm, object_pos=object_pos, object_vel=object_vel, time=0.0,
                       last_contact=empty_contact(n))
    return world, goal


def target_position(spec: EnvSpec, world: WorldState) -> np.ndarray:
    """The body that has to reach the goal: end effector (reach) or object (push/slide)."""
    if spec.has_object:
        return np.asarray(world.object_pos, dtype=np.float64)
    return forward_kinematics(spec.chain, world.arm.q)


def observe(spec: EnvSpec, world: WorldState, goal) -> np.ndarray:
    ee = forward_kinematics(spec.chain, world.arm.q)
    parts = [world.arm.q, world.arm.qd, ee, np.asarray(goal, dtype=np.float64)]
    if spec.has_object:
        parts += [world.object_pos, world.object_vel, ee - world.object_pos]
    return np.concatenate(parts)


def final_error(spec: EnvSpec, world: WorldState, goal) -> float:
    return float(np.linalg.norm(target_position(spec, world) - np.asarray(goal, dtype=np.float64)))


def success(spec: EnvSpec, world: WorldState, goal) -> bool:
    # closed ball: exactly on the radius counts as success
    return final_error(spec, world, goal) <= spec.success_radius


def reward(spec: EnvSpec, world: WorldState, goal) -> float:
    distance = final_error(spec, world, goal)
    if spec.reward_mode == 'sparse':
        return -1.0 if distance > spec.success_radius else 0.0
    return -distance


def advance(spec: EnvSpec, world: WorldState, tau) -> Tuple[WorldState, ContactRecord]:
    """
    Hold tau for spec.frame_skip substeps.

    The returned record aggregates the interval. Work increments are summed and tau_ext
    averaged over the substeps; in_contact reports whether any substep touched.
    """
    tau_ext_sum = np.zeros(spec.chain.n_links)
    friction_work = 0.0
    contact_work = 0.0
    touched = False
    record = None
    for _ in range(spec.frame_skip):
        world, record = step(spec, world, tau)
        tau_ext_sum += record.tau_ext
        friction_work += record.friction_work_increment
        contact_work += record.contact_work_increment
        touched = touched or record.in_contact
    aggregate = replace(record, tau_ext=tau_ext_sum / spec.frame_skip,
                        friction_work_increment=friction_work, in_contact=touched,
                        contact_work_increment=contact_work)
    return world, aggregate
