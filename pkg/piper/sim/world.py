"""
Simulator state and the single-substep transition function.

The arm is integrated with semi-implicit Euler (velocity first, then position).
Contact between the end-effector disk and the object disk is a penalty spring-damper;
the object slides on the table under Coulomb friction with a stick/slip threshold.
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from piper.common.errors import SimulationDivergedError
from piper.dynamics.model import JointState
from piper.dynamics.rigid_body import ee_jacobian, forward_dynamics, forward_kinematics
from piper.sim.spec import EnvSpec


@dataclass(frozen=True, eq=False)
class ContactRecord:
    """
    Contact quantities for one substep.

    Event fields (`ee_object_impulse`, `friction_impulse`, `event_start_velocity`) accumulate
    over a contiguous contact event and keep their values after separation until the next
    event begins.
    """
    normal_force: float
    contact_point: np.ndarray
    ee_object_impulse: np.ndarray
    tau_ext: np.ndarray
    friction_work_increment: float
    friction_impulse: np.ndarray
    in_contact: bool = False
    event_start_velocity: Optional[np.ndarray] = None
    contact_work_increment: float = 0.0


@dataclass(frozen=True, eq=False)
class WorldState:
    arm: JointState
    object_pos: Optional[np.ndarray] = None
    object_vel: Optional[np.ndarray] = None
    time: float = 0.0
    last_contact: Optional[ContactRecord] = None


def empty_contact(n_links: int) -> ContactRecord:
    return ContactRecord(normal_force=0.0, contact_point=np.zeros(2), ee_object_impulse=np.zeros(2),
                         tau_ext=np.zeros(n_links), friction_work_increment=0.0,
                         friction_impulse=np.zeros(2))


def _contact_force(spec: EnvSpec, q: np.ndarray, qd: np.ndarray,
                   object_pos: np.ndarray, object_vel: np.ndarray):
    """Penalty force on the object, the contact point and the end-effector Jacobian."""
    params = spec.contact
    ee = forward_kinematics(spec.chain, q)
    J = ee_jacobian(spec.chain, q)
    offset = object_pos - ee
    distance = float(np.linalg.norm(offset))
    penetration = params.ee_radius + params.object_radius - distance
    if penetration <= 0.0 or distance == 0.0:
        return 0.0, np.zeros(2), ee, J
    normal = offset / distance
    separating_speed = float((object_vel - J @ qd) @ normal)
    normal_force = max(0.0, params.stiffness * penetration - params.damping * separating_speed)
    return normal_force, normal, ee, J


def _slide_object(spec: EnvSpec, velocity: np.ndarray,
                  applied: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float, float]:
    """
    Advance the object velocity under the applied contact force and table friction.

    Returns the new velocity, the friction impulse over the substep, the friction work and
    the work done by the contact force. Kinetic energy changes by exactly
    contact work minus friction work.
    """
    m = spec.object_mass
    dt = spec.dt
    mu = spec.friction_mu
    g = spec.contact.table_gravity
    trial = velocity + dt * applied / m
    speed = float(np.linalg.norm(velocity))

    if mu == 0.0:
        new = trial
    elif speed > spec.contact.v_stick:
        # kinetic friction opposes the slip direction but never reverses it
        direction = velocity / speed
        along = max(0.0, float(trial @ direction))
        new = trial - min(mu * g * dt, along) * direction
    else:
        applied_norm = float(np.linalg.norm(applied))
        if applied_norm <= mu * m * g:
            # static hold
            new = np.zeros(2)
        else:
            new = trial - mu * g * dt * applied / applied_norm

    friction_impulse = m * (new - trial)
    work = max(0.0, -float(friction_impulse @ (new + trial)) / 2.0)
    contact_work = dt * float(applied @ (velocity + trial)) / 2.0
    return new, friction_impulse, work, contact_work


def step(spec: EnvSpec, world: WorldState, tau) -> Tuple[WorldState, ContactRecord]:
    """
    Advance the world by one substep of length spec.dt under joint torques tau.

    Raises:
        SimulationDivergedError: if the resulting state is not finite
    """
    model = spec.chain
    tau = np.clip(np.asarray(tau, dtype=np.float64), -model.torque_limits, model.torque_limits)
    q = world.arm.q
    qd = world.arm.qd
    dt = spec.dt
    previous = world.last_contact

    normal_force, normal, ee, J = 0.0, np.zeros(2), None, None
    if spec.has_object:
        normal_force, normal, ee, J = _contact_force(spec, q, qd, world.object_pos, world.object_vel)
    force_on_object = normal_force * normal
    tau_ext = J.T @ (-force_on_object) if J is not None else np.zeros(model.n_links)

    with np.errstate(over='ignore', invalid='ignore'):
        qdd = forward_dynamics(model, q, qd, tau, tau_ext)
        qd_next = qd + dt * qdd
        q_next = q + dt * qd_next

    if not (np.all(np.isfinite(q_next)) and np.all(np.isfinite(qd_next))):
        logging.error(f"Simulation diverged at t={world.time:.4f}s with tau={tau.tolist()}")
        raise SimulationDivergedError(f"non-finite arm state at t={world.time + dt:.4f}s")

    object_pos, object_vel = world.object_pos, world.object_vel
    friction_impulse = np.zeros(2)
    friction_work = 0.0
    contact_work = 0.0
    if spec.has_object:
        object_vel, friction_impulse, friction_work, contact_work = _slide_object(
            spec, world.object_vel, force_on_object)
        object_pos = world.object_pos + dt * object_vel
        if not (np.all(np.isfinite(object_pos)) and np.all(np.isfinite(object_vel))):
            raise SimulationDivergedError(f"non-finite object state at t={world.time + dt:.4f}s")

    in_contact = normal_force > 0.0
    if in_contact:
        contact_point = ee + spec.contact.ee_radius * normal
        if previous is not None and previous.in_contact:
            impulse = previous.ee_object_impulse + dt * force_on_object
            event_friction = previous.friction_impulse + friction_impulse
            event_start = previous.event_start_velocity
        else:
            impulse = dt * force_on_object
            event_friction = friction_impulse
            event_start = np.array(world.object_vel, dtype=np.float64)
        record = ContactRecord(normal_force=normal_force, contact_point=contact_point,
                               ee_object_impulse=impulse, tau_ext=tau_ext,
                               friction_work_increment=friction_work, friction_impulse=event_friction,
                               in_contact=True, event_start_velocity=event_start,
                               contact_work_increment=contact_work)
    elif previous is not None:
        record = replace(previous, normal_force=0.0, tau_ext=tau_ext, friction_work_increment=friction_work,
                         in_contact=False, contact_work_increment=contact_work)
    else:
        record = replace(empty_contact(model.n_links), friction_work_increment=friction_work)

    next_world = WorldState(arm=JointState(q_next, qd_next), object_pos=object_pos, object_vel=object_vel,
                            time=world.time + dt, last_contact=record)
    return next_world, record
