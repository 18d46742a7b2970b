"""
Physics residuals and task constraints.

Every functional accepts plain arrays or tape tensors. Given arrays it returns numbers;
given at least one Tensor it records itself on that tensor's tape so gradients flow
through it. Leading batch dimensions broadcast throughout.
"""
import functools
from typing import NamedTuple

import numpy as np

from piper.autodiff import tape as ops
from piper.autodiff.tape import Tape, Tensor
from piper.common.errors import ContractViolation

STANDARD_GRAVITY = 9.81


class ResidualInputs(NamedTuple):
    M: object
    b: object
    qdd_hat: object
    action: object


class EnergyInputs(NamedTuple):
    qd: object
    M: object
    M_rate: object
    G: object
    qdd_hat: object
    tau: object


class ConstraintWeights(NamedTuple):
    """Loss coefficients; all must be non-negative."""
    reach_dynamics: float = 1.0     # λ1, articulation consistency
    reach_goal: float = 1.0         # λ2, kinematic feasibility
    friction: float = 0.1           # λf, friction-work balance
    momentum: float = 0.1           # λm, impulse-momentum at impact
    grasp: float = 1.0              # λg, force closure
    pinn_beta: float = 0.1          # β, residual weight in the proxy loss
    phys_on_policy: float = 0.01    # λ_phys for PPO
    phys_off_policy: float = 0.005  # λ_phys for SAC

    def lambda_phys(self, algorithm: str) -> float:
        return self.phys_on_policy if algorithm == 'ppo' else self.phys_off_policy

    def problems(self):
        return [f"weights.{name} must be >= 0, got {value}" for name, value in self._asdict().items()
                if not value >= 0]


def _find_tape(values):
    for value in values:
        if isinstance(value, Tensor):
            return value.tape
        if isinstance(value, (ResidualInputs, EnergyInputs)):
            found = _find_tape(value)
            if found is not None:
                return found
    return None


def _lift(value, tape: Tape):
    if isinstance(value, ConstraintWeights):
        return value
    if isinstance(value, (ResidualInputs, EnergyInputs)):
        return type(value)(*(_lift(v, tape) for v in value))
    if isinstance(value, (np.ndarray, list, tuple, float, int)) and not isinstance(value, bool):
        return tape.constant(value)
    return value


def differentiable(fn):
    """
    Lift array arguments onto the tape of any Tensor argument. Without one, run on a
    scratch tape and unwrap the result to a float or an array.
    """
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        tape = _find_tape(args) or _find_tape(kwargs.values())
        recorded = tape is not None
        tape = tape or Tape()
        out = fn(*(_lift(a, tape) for a in args), **{k: _lift(v, tape) for k, v in kwargs.items()})
        if recorded:
            return out
        value = out.value
        return float(value) if np.ndim(value) == 0 else value
    return wrapper


def _sum_last(x: Tensor) -> Tensor:
    return ops.total(x, axis=-1) if x.value.ndim > 0 else x


def _squared_norm(x: Tensor) -> Tensor:
    return _sum_last(ops.square(x))


def _value(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


@differentiable
def physics_residual(inputs: ResidualInputs):
    """r = M·qdd_hat + b - a."""
    M, b, qdd_hat, action = inputs
    if M.shape[-1] != qdd_hat.shape[-1] or b.shape[-1] != action.shape[-1] or b.shape[-1] != qdd_hat.shape[-1]:
        raise ContractViolation(f"residual inputs are not congruent: M {M.shape}, b {b.shape}, "
                                f"qdd_hat {qdd_hat.shape}, a {action.shape}")
    return ops.matvec(M, qdd_hat) + b - action


@differentiable
def physics_penalty(residual):
    """‖r‖², per sample when batched."""
    return _squared_norm(residual)


@differentiable
def energy_residual(inputs: EnergyInputs):
    """|qdᵀ·M·qdd_hat + ½·qdᵀ·Ṁ·qd + qdᵀ·G - qdᵀ·τ|: instantaneous power balance violation."""
    qd, M, M_rate, G, qdd_hat, tau = inputs
    power = ops.matvec(M, qdd_hat) + 0.5 * ops.matvec(M_rate, qd) + G - tau
    return ops.absolute(_sum_last(qd * power))


@differentiable
def reach_loss(r_dyn, ee, goal, weights: ConstraintWeights):
    return weights.reach_dynamics * _squared_norm(r_dyn) + weights.reach_goal * _squared_norm(ee - goal)


def friction_work_accumulate(running: float, contact) -> float:
    """Add the simulator's friction work for one record (J) to the running window total."""
    return running + float(contact.friction_work_increment)


@differentiable
def push_loss(reach_part, friction_work, delta_kinetic, lambda_friction, work_input=0.0):
    """
    reach_part + λf·|W_fric + ΔE_kin - W_input|.

    Over a window, friction work balances the block's kinetic-energy change net of the
    work put into the block: W_fric = W_input - ΔE_kin.
    """
    return reach_part + lambda_friction * ops.absolute(friction_work + delta_kinetic - work_input)


@differentiable
def slide_loss(reach_part, object_mass, delta_velocity, impact_impulse, lambda_momentum):
    """reach_part + λm·‖m·Δv - J‖²."""
    return reach_part + lambda_momentum * _squared_norm(object_mass * delta_velocity - impact_impulse)


@differentiable
def sliding_friction_residual(mass, acceleration, mu, gravity, velocity, v_stick: float = 1e-3):
    """
    r_fric = m·a + μ·m·g·v̂ for a sliding object, row by row when batched.

    Raises:
        ContractViolation: if any ‖v‖ <= v_stick (the slip direction is undefined)
    """
    speed = ops.sqrt(ops.total(ops.square(velocity), axis=-1, keepdims=True))
    v_stick = float(_value(v_stick))
    slowest = float(np.min(speed.value))
    if slowest <= v_stick:
        raise ContractViolation(f"object is not sliding: |v|={slowest} <= v_stick={v_stick}")
    direction = velocity / speed
    return mass * acceleration + mu * mass * gravity * direction


def combined_mass(M_arm, J, object_mass: float) -> np.ndarray:
    """Arm mass matrix augmented by a point mass held at the end effector, M + m·JᵀJ."""
    M_arm = np.asarray(M_arm, dtype=np.float64)
    J = np.asarray(J, dtype=np.float64)
    if J.shape != (2, M_arm.shape[0]):
        raise ContractViolation(f"Jacobian must be (2, {M_arm.shape[0]}), got {J.shape}")
    return M_arm + object_mass * J.T @ J


@differentiable
def grasp_loss(object_mass, lift_acceleration, mu_grip, grip_force, lambda_grasp, gravity=STANDARD_GRAVITY):
    """λg·max(0, m·(g + z̈) - μ_grip·F_grip)²."""
    shortfall = ops.relu(object_mass * (gravity + lift_acceleration) - mu_grip * grip_force)
    return lambda_grasp * ops.square(shortfall)
