"""
Analytic rigid-body dynamics for planar revolute chains.

All algorithms work with planar spatial vectors expressed in the world frame:
motion vectors are (ω, vx, vy) and force vectors are (n, fx, fy), both referred to
the world origin. Revolute joint i located at p_i has motion axis S_i = (1, p_iy, -p_ix).
Gravity enters as a fictitious base acceleration, so RNEA returns G(q) at rest.
"""
from typing import Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from piper.common.errors import ContractViolation, DynamicsInvariantError
from piper.dynamics.model import ChainModel, DynamicsTerms, ExternalForce, ExternalForceSpec

# Step for the central differences behind ∂M/∂q (rad)
FD_STEP = 1e-6


def _vector(values, n: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (n,):
        raise ContractViolation(f"{name} must have shape ({n},), got {arr.shape}")
    return arr


def link_geometry(model: ChainModel, q) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Joint positions (N+1 x 2, last row is the end effector), absolute link angles (N,)
    and centre-of-mass positions (N x 2) for configuration q.
    """
    q = _vector(q, model.n_links, 'q')
    angles = np.cumsum(q)
    directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    joints = np.zeros((model.n_links + 1, 2))
    joints[1:] = np.cumsum(directions * model.lengths[:, None], axis=0)
    coms = joints[:-1] + directions * model.com_offsets[:, None]
    return joints, angles, coms


def _motion_axis(point: np.ndarray) -> np.ndarray:
    return np.array([1.0, point[1], -point[0]])


def _spatial_inertia(mass: float, com: np.ndarray, inertia: float) -> np.ndarray:
    cx, cy = com
    return np.array([
        [inertia + mass * (cx * cx + cy * cy), -mass * cy, mass * cx],
        [-mass * cy, mass, 0.0],
        [mass * cx, 0.0, mass],
    ])


def _cross_motion(v: np.ndarray, m: np.ndarray) -> np.ndarray:
    # v ×m m
    return np.array([0.0, v[2] * m[0] - v[0] * m[2], v[0] * m[1] - v[1] * m[0]])


def _cross_force(v: np.ndarray, f: np.ndarray) -> np.ndarray:
    # v ×f f
    return np.array([-v[2] * f[1] + v[1] * f[2], -v[0] * f[2], v[0] * f[1]])


def mass_matrix(model: ChainModel, q) -> np.ndarray:
    """
    Joint-space inertia matrix M(q) by the composite rigid body algorithm.

    Composite inertias are accumulated from the tip towards the base and projected
    onto the joint motion axes: M_ij = S_iᵀ Ic_max(i,j) S_j.
    """
    joints, _, coms = link_geometry(model, q)
    n = model.n_links
    composite = [None] * n
    running = np.zeros((3, 3))
    for i in range(n - 1, -1, -1):
        running = running + _spatial_inertia(model.masses[i], coms[i], model.inertias[i])
        composite[i] = running
    axes = [_motion_axis(joints[i]) for i in range(n)]

    M = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            M[i, j] = axes[i] @ composite[j] @ axes[j]
            M[j, i] = M[i, j]
    return M


def _link_forces(model: ChainModel, joints: np.ndarray, f_ext: ExternalForceSpec):
    """Split an external force spec into per-link spatial forces and a generalized torque."""
    n = model.n_links
    spatial = np.zeros((n, 3))
    generalized = np.zeros(n)
    if f_ext is None:
        return spatial, generalized
    if isinstance(f_ext, ExternalForce):
        if not 0 <= f_ext.link < n:
            raise ContractViolation(f"external force link {f_ext.link} out of range")
        px, py = f_ext.point
        fx, fy = f_ext.force
        spatial[f_ext.link] = (px * fy - py * fx, fx, fy)
        return spatial, generalized
    return spatial, _vector(f_ext, n, 'tau_ext')


def rnea(model: ChainModel, q, qd, qdd, f_ext: ExternalForceSpec = None) -> np.ndarray:
    """
    Recursive Newton-Euler inverse dynamics: τ = M(q)·qdd + C(q,qd)·qd + G(q) - τ_ext.
    """
    n = model.n_links
    q = _vector(q, n, 'q')
    qd = _vector(qd, n, 'qd')
    qdd = _vector(qdd, n, 'qdd')
    joints, _, coms = link_geometry(model, q)
    spatial_ext, generalized_ext = _link_forces(model, joints, f_ext)

    # forward pass: velocities, accelerations and net body forces
    velocity = np.zeros(3)
    acceleration = np.array([0.0, -model.gravity[0], -model.gravity[1]])
    axes = np.zeros((n, 3))
    forces = np.zeros((n, 3))
    for i in range(n):
        axes[i] = _motion_axis(joints[i])
        velocity = velocity + axes[i] * qd[i]
        acceleration = acceleration + axes[i] * qdd[i] + _cross_motion(velocity, axes[i]) * qd[i]
        inertia = _spatial_inertia(model.masses[i], coms[i], model.inertias[i])
        forces[i] = inertia @ acceleration + _cross_force(velocity, inertia @ velocity) - spatial_ext[i]

    # backward pass: project transmitted forces onto the joint axes
    tau = np.zeros(n)
    transmitted = np.zeros(3)
    for i in range(n - 1, -1, -1):
        transmitted = transmitted + forces[i]
        tau[i] = axes[i] @ transmitted
    return tau - generalized_ext


def bias_force(model: ChainModel, q, qd, f_ext: ExternalForceSpec = None) -> np.ndarray:
    """Generalized bias b = RNEA(q, qd, 0) = C·qd + G - τ_ext (the zero-acceleration query)."""
    return rnea(model, q, qd, np.zeros(model.n_links), f_ext)


def gravity_vector(model: ChainModel, q) -> np.ndarray:
    zeros = np.zeros(model.n_links)
    return rnea(model, q, zeros, zeros)


def inverse_dynamics(model: ChainModel, q, qd, qdd, f_ext: ExternalForceSpec = None) -> np.ndarray:
    return rnea(model, q, qd, qdd, f_ext)


def forward_dynamics(model: ChainModel, q, qd, tau, f_ext: ExternalForceSpec = None) -> np.ndarray:
    """
    Joint accelerations qdd = M⁻¹(τ - b), solved through a Cholesky factorization of M.

    Raises:
        DynamicsInvariantError: if M is not positive definite
    """
    tau = _vector(tau, model.n_links, 'tau')
    M = mass_matrix(model, q)
    b = bias_force(model, q, qd, f_ext)
    return solve_spd(M, tau - b)


def solve_spd(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        factor = cho_factor(M, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as e:
        raise DynamicsInvariantError(f"mass matrix is not positive definite: {e}")
    return cho_solve(factor, rhs, check_finite=False)


def mass_matrix_partials(model: ChainModel, q, h: float = FD_STEP) -> np.ndarray:
    """∂M/∂q_i for every i by central differences, stacked as an (N, N, N) array."""
    q = _vector(q, model.n_links, 'q')
    n = model.n_links
    partials = np.zeros((n, n, n))
    for i in range(n):
        step = np.zeros(n)
        step[i] = h
        partials[i] = (mass_matrix(model, q + step) - mass_matrix(model, q - step)) / (2.0 * h)
    return partials


def coriolis_matrix(model: ChainModel, q, qd, h: float = FD_STEP) -> np.ndarray:
    """
    Coriolis matrix from Christoffel symbols of the first kind,
    c_ijk = ½(∂M_kj/∂q_i + ∂M_ki/∂q_j - ∂M_ij/∂q_k), C_kj = Σ_i c_ijk·qd_i.
    """
    qd = _vector(qd, model.n_links, 'qd')
    dM = mass_matrix_partials(model, q, h)
    # dM[i, k, j] = ∂M_kj/∂q_i
    christoffel = 0.5 * (dM + np.transpose(dM, (2, 1, 0)) - np.transpose(dM, (1, 0, 2)))
    # christoffel[i, k, j] = c_ijk
    return np.einsum('ikj,i->kj', christoffel, qd)


def mass_matrix_dot(model: ChainModel, q, qd, h: float = FD_STEP) -> np.ndarray:
    """Ṁ = Σ_i ∂M/∂q_i · qd_i along the current velocity."""
    qd = _vector(qd, model.n_links, 'qd')
    return np.einsum('ikj,i->kj', mass_matrix_partials(model, q, h), qd)


def mass_matrix_rate(M_t, M_next, dt: float) -> np.ndarray:
    """Forward-difference Ṁ ≈ (M_next - M_t)/dt across one timestep."""
    if not dt > 0:
        raise ContractViolation(f"dt must be > 0, got {dt}")
    return (np.asarray(M_next, dtype=np.float64) - np.asarray(M_t, dtype=np.float64)) / dt


def forward_kinematics(model: ChainModel, q) -> np.ndarray:
    joints, _, _ = link_geometry(model, q)
    return joints[-1].copy()


def point_jacobian(model: ChainModel, q, point, link: int) -> np.ndarray:
    """2 x N Jacobian of a world point rigidly attached to `link`; distal columns are zero."""
    joints, _, _ = link_geometry(model, q)
    point = np.asarray(point, dtype=np.float64)
    J = np.zeros((2, model.n_links))
    for i in range(link + 1):
        J[0, i] = -(point[1] - joints[i, 1])
        J[1, i] = point[0] - joints[i, 0]
    return J


def ee_jacobian(model: ChainModel, q) -> np.ndarray:
    """Analytic planar Jacobian of forward_kinematics; rows are (∂x/∂q, ∂y/∂q)."""
    joints, _, _ = link_geometry(model, q)
    return point_jacobian(model, q, joints[-1], model.n_links - 1)


def external_torque(model: ChainModel, q, f_ext: ExternalForceSpec) -> np.ndarray:
    """Generalized torque τ_ext = Jᵀ·F produced by an external force spec."""
    if f_ext is None:
        return np.zeros(model.n_links)
    if isinstance(f_ext, ExternalForce):
        return point_jacobian(model, q, f_ext.point, f_ext.link).T @ f_ext.force
    return _vector(f_ext, model.n_links, 'tau_ext').copy()


def kinetic_energy(model: ChainModel, q, qd) -> float:
    qd = _vector(qd, model.n_links, 'qd')
    return float(0.5 * qd @ mass_matrix(model, q) @ qd)


def potential_energy(model: ChainModel, q) -> float:
    """P = Σ m_i·(-g)·c_i with the world origin as zero reference."""
    _, _, coms = link_geometry(model, q)
    return float(-np.sum(model.masses * (coms @ model.gravity)))


def total_energy(model: ChainModel, q, qd) -> float:
    return kinetic_energy(model, q, qd) + potential_energy(model, q)


def dynamics_terms(model: ChainModel, q, qd, f_ext: ExternalForceSpec = None) -> DynamicsTerms:
    """Bundle M, b, G, C and τ_ext for one state."""
    return DynamicsTerms(
        M=mass_matrix(model, q),
        b=bias_force(model, q, qd, f_ext),
        G=gravity_vector(model, q),
        C=coriolis_matrix(model, q, qd),
        tau_ext=external_torque(model, q, f_ext),
    )
