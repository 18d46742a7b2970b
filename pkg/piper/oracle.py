"""
Dynamics oracle: exact M, b and τ_ext read from the simulator's own rigid-body engine.

Nothing in here depends on a learned component; the labels it produces are the
ground truth the acceleration proxy and the physics penalty are built on.
"""
import logging
from typing import NamedTuple, Tuple

import numpy as np

from piper.common.errors import ContractViolation
from piper.dynamics.rigid_body import bias_force, gravity_vector, mass_matrix, mass_matrix_rate
from piper.sim.spec import EnvSpec
from piper.sim.world import ContactRecord, WorldState

# ‖τ_ext‖ (N·m) above which a finite-difference label is flagged as contact-corrupted
DEFAULT_OUTLIER_THRESHOLD = 0.5


class OracleSample(NamedTuple):
    """
    Oracle terms for one recorded transition.

    tau_eff = M·qdd_obs + b holds by construction. `G` and `M_rate` feed the energy
    residual; `contact_outlier` marks labels taken while a large contact torque acted.
    """
    M: np.ndarray
    b: np.ndarray
    tau_ext: np.ndarray
    qdd_obs: np.ndarray
    tau_eff: np.ndarray
    G: np.ndarray
    M_rate: np.ndarray
    contact_outlier: bool = False


def extract(spec: EnvSpec, world: WorldState, contact: ContactRecord) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Mass matrix, bias force and external torque at the pre-step state of `world`.

    Args:
        spec: environment the world belongs to
        world: state the transition started from
        contact: record returned by the transition; supplies τ_ext

    Returns:
        (M, b, tau_ext) with b = C·qd + G - τ_ext
    """
    q, qd = world.arm.q, world.arm.qd
    tau_ext = np.array(contact.tau_ext, dtype=np.float64)
    return mass_matrix(spec.chain, q), bias_force(spec.chain, q, qd, tau_ext), tau_ext


def fd_acceleration(qd_t, qd_next, dt: float) -> np.ndarray:
    """Backward difference of the integrator's velocity update, (qd_next - qd_t)/dt."""
    if not dt > 0:
        raise ContractViolation(f"dt must be > 0, got {dt}")
    qd_t = np.asarray(qd_t, dtype=np.float64)
    qd_next = np.asarray(qd_next, dtype=np.float64)
    if qd_t.shape != qd_next.shape:
        raise ContractViolation(f"velocity shapes differ: {qd_t.shape} vs {qd_next.shape}")
    return (qd_next - qd_t) / dt


def effective_torque(M, qdd_obs, b) -> np.ndarray:
    return np.asarray(M) @ np.asarray(qdd_obs) + np.asarray(b)


def sample(spec: EnvSpec, world: WorldState, next_world: WorldState, contact: ContactRecord,
           dt: float = None, outlier_threshold: float = DEFAULT_OUTLIER_THRESHOLD) -> OracleSample:
    """
    Build the oracle sample for the transition world -> next_world.

    `dt` defaults to the control interval of the spec; pass spec.dt for single substeps.
    """
    dt = spec.control_dt if dt is None else dt
    M, b, tau_ext = extract(spec, world, contact)
    qdd_obs = fd_acceleration(world.arm.qd, next_world.arm.qd, dt)
    M_next = mass_matrix(spec.chain, next_world.arm.q)
    outlier = bool(np.linalg.norm(tau_ext) > outlier_threshold)
    if outlier:
        logging.debug(f"Contact outlier at t={world.time:.4f}s: |tau_ext|={np.linalg.norm(tau_ext):.3f}")
    return OracleSample(M=M, b=b, tau_ext=tau_ext, qdd_obs=qdd_obs, tau_eff=effective_torque(M, qdd_obs, b),
                        G=gravity_vector(spec.chain, world.arm.q), M_rate=mass_matrix_rate(M, M_next, dt),
                        contact_outlier=outlier)
