"""
Invariant suites for the dynamics engine and the autodiff substrate.

dyncheck() samples random states on random chains and checks the structural
identities of the manipulator equation; gradcheck() compares every differentiable
loss against central finite differences along random directions.
"""
import logging
from typing import Callable, List, NamedTuple, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor

from piper.autodiff import tape as ops
from piper.autodiff.network import check_gradients, grad_check
from piper.autodiff.tape import Tape
from piper.common.rng import generator
from piper.dynamics import rigid_body
from piper.dynamics.model import ChainModel, JointState, model_from_dict
from piper.physics_losses import (ConstraintWeights, EnergyInputs, energy_residual, grasp_loss, physics_penalty,
                                  push_loss, reach_loss, slide_loss, sliding_friction_residual)
from piper.pinn import PinnBatch, PinnModel, pinn_loss
from piper.rl.penalty import PenaltyBatch, piper_penalty
from piper.rl.policy import GaussianPolicy
from piper.sim.spec import make_env_spec
from piper.sim.world import WorldState, step

LINK_COUNTS = (1, 2, 3, 5)
SYMMETRY_TOLERANCE = 1e-10
CRBA_TOLERANCE = 1e-8
CLOSED_FORM_TOLERANCE = 1e-6
BIAS_TOLERANCE = 1e-6
# ∂M/∂q comes from central differences, so the skew identity holds to FD accuracy
SKEW_TOLERANCE = 1e-6
ENERGY_DRIFT_TOLERANCE = 0.01
DRIFT_RATIO_RANGE = (1.6, 2.4)
GRADIENT_TOLERANCE = 1e-4


class CheckResult(NamedTuple):
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ''


class CheckReport(NamedTuple):
    suite: str
    results: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> List[CheckResult]:
        return [r for r in self.results if not r.passed]

    def lines(self) -> List[str]:
        return [f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.value:.3e} (tolerance {r.tolerance:.1e})"
                + (f" {r.detail}" if r.detail else '') for r in self.results]


def _result(name: str, value: float, tolerance: float, detail: str = '') -> CheckResult:
    value = float(value)
    return CheckResult(name, bool(np.isfinite(value) and value <= tolerance), value, tolerance, detail)


def random_chain(n_links: int, rng: np.random.Generator, gravity=(0.0, -9.81)) -> ChainModel:
    """A chain with random link lengths, masses, centre-of-mass offsets and inertias."""
    links = []
    for _ in range(n_links):
        length = float(rng.uniform(0.2, 1.0))
        links.append({
            'length': length,
            'mass': float(rng.uniform(0.2, 2.0)),
            'com_offset': float(rng.uniform(0.1, 0.9) * length),
            'inertia_com': float(rng.uniform(0.001, 0.1)),
        })
    return model_from_dict({'links': links, 'gravity': list(gravity), 'torque_limit': [10.0] * n_links})


def two_link_closed_form(model: ChainModel, q, qd, qdd) -> np.ndarray:
    """Textbook inverse dynamics of a 2-link planar arm with gravity along -y."""
    l1 = model.lengths[0]
    m1, m2 = model.masses
    c1, c2 = model.com_offsets
    i1, i2 = model.inertias
    g = -model.gravity[1]
    cos2, sin2 = np.cos(q[1]), np.sin(q[1])
    M = np.array([
        [i1 + i2 + m1 * c1 ** 2 + m2 * (l1 ** 2 + c2 ** 2 + 2 * l1 * c2 * cos2), i2 + m2 * (c2 ** 2 + l1 * c2 * cos2)],
        [i2 + m2 * (c2 ** 2 + l1 * c2 * cos2), i2 + m2 * c2 ** 2],
    ])
    h = -m2 * l1 * c2 * sin2
    coriolis = np.array([h * (2 * qd[0] * qd[1] + qd[1] ** 2), -h * qd[0] ** 2])
    gravity = np.array([
        (m1 * c1 + m2 * l1) * g * np.cos(q[0]) + m2 * c2 * g * np.cos(q[0] + q[1]),
        m2 * c2 * g * np.cos(q[0] + q[1]),
    ])
    return M @ qdd + coriolis + gravity


def _state_checks(model: ChainModel, rng: np.random.Generator, n_states: int):
    n = model.n_links
    worst = {'symmetry': 0.0, 'cholesky': 0.0, 'crba_vs_rnea': 0.0, 'skew': 0.0, 'bias': 0.0, 'closed_form': 0.0}
    for _ in range(n_states):
        q = rng.uniform(-np.pi, np.pi, n)
        qd = rng.normal(0.0, 2.0, n)
        M = rigid_body.mass_matrix(model, q)
        worst['symmetry'] = max(worst['symmetry'], float(np.max(np.abs(M - M.T))))
        try:
            cho_factor(M, lower=True)
        except LinAlgError:
            worst['cholesky'] += 1.0

        G = rigid_body.gravity_vector(model, q)
        zeros = np.zeros(n)
        for j in range(n):
            unit = np.zeros(n)
            unit[j] = 1.0
            column = rigid_body.rnea(model, q, zeros, unit) - G
            worst['crba_vs_rnea'] = max(worst['crba_vs_rnea'], float(np.max(np.abs(column - M[:, j]))))

        C = rigid_body.coriolis_matrix(model, q, qd)
        M_dot = rigid_body.mass_matrix_dot(model, q, qd)
        z = rng.standard_normal(n)
        skew = abs(float(z @ (M_dot - 2.0 * C) @ z)) / max(1.0, float(np.linalg.norm(M_dot)) * float(z @ z))
        worst['skew'] = max(worst['skew'], skew)

        b = rigid_body.bias_force(model, q, qd)
        worst['bias'] = max(worst['bias'], float(np.max(np.abs(b - (C @ qd + G)))))

        if n == 2:
            qdd = rng.normal(0.0, 5.0, n)
            expected = two_link_closed_form(model, q, qd, qdd)
            got = rigid_body.rnea(model, q, qd, qdd)
            worst['closed_form'] = max(worst['closed_form'], float(np.max(np.abs(got - expected))))
    return worst


def pendulum_drift(dt: float, duration: float = 5.0, q0: float = -np.pi / 2 + 1.0) -> float:
    """
    Maximum relative energy deviation of a torque-free, frictionless single-rod
    pendulum released from rest at q0, integrated by the simulator.
    """
    spec = make_env_spec('reach2d', model_from_dict({
        'links': [{'length': 0.5, 'mass': 1.0, 'com_offset': 0.25}],
        'gravity': [0.0, -9.81],
        'torque_limit': [1.0],
    }), {'dt': dt, 'frame_skip': 1})
    world = WorldState(arm=JointState(np.array([q0]), np.zeros(1)))
    e0 = rigid_body.total_energy(spec.chain, world.arm.q, world.arm.qd)
    worst = 0.0
    for _ in range(int(round(duration / dt))):
        world, _ = step(spec, world, np.zeros(1))
        energy = rigid_body.total_energy(spec.chain, world.arm.q, world.arm.qd)
        worst = max(worst, abs(energy - e0) / abs(e0))
    return worst


def dyncheck(n_states: int = 1000, seed: int = 0) -> CheckReport:
    """
    Run the dynamics invariant suite over 1, 2, 3 and 5-link random chains.

    Args:
        n_states: Random states per chain
        seed: Seed of the state and chain draws

    Returns:
        CheckReport: one result per invariant and chain
    """
    rng = generator(seed)
    results = []
    for n_links in LINK_COUNTS:
        model = random_chain(n_links, rng)
        worst = _state_checks(model, rng, n_states)
        label = f"{n_links}-link"
        results.append(_result(f"mass matrix symmetric ({label})", worst['symmetry'], SYMMETRY_TOLERANCE))
        results.append(_result(f"mass matrix Cholesky-factorizable ({label})", worst['cholesky'], 0.0,
                               'failures counted'))
        results.append(_result(f"CRBA column vs unit-acceleration RNEA ({label})", worst['crba_vs_rnea'],
                               CRBA_TOLERANCE))
        results.append(_result(f"z'(Mdot - 2C)z ({label})", worst['skew'], SKEW_TOLERANCE, 'relative'))
        results.append(_result(f"bias vs C*qd + G ({label})", worst['bias'], BIAS_TOLERANCE))
        if n_links == 2:
            results.append(_result("2-link closed form", worst['closed_form'], CLOSED_FORM_TOLERANCE))
        logging.debug(f"dyncheck {label}: {worst}")

    drift = pendulum_drift(0.002)
    half = pendulum_drift(0.001)
    results.append(_result("pendulum energy drift (dt=0.002, 5 s)", drift, ENERGY_DRIFT_TOLERANCE))
    ratio = drift / half if half > 0 else float('inf')
    low, high = DRIFT_RATIO_RANGE
    results.append(CheckResult("drift ratio when dt halves", bool(low <= ratio <= high), ratio, high,
                               f"expected in [{low}, {high}]"))

    report = CheckReport('dyncheck', results)
    logging.info(f"dyncheck: {len(results) - len(report.failures())}/{len(results)} checks passed")
    return report


def _tape_loss(fn: Callable[..., object]) -> Callable[[List[np.ndarray]], tuple]:
    """Wrap a functional of arrays into the (value, gradients) form check_gradients expects."""
    def loss(point: Sequence[np.ndarray]):
        tape = Tape()
        variables = [tape.variable(p) for p in point]
        out = fn(*variables)
        return float(out.value), tape.gradient(out, variables)
    return loss


def _loss_checks(rng: np.random.Generator):
    """(name, loss, point) for every task functional."""
    weights = ConstraintWeights()
    n = 2
    A = rng.standard_normal((n, n))
    M = A @ A.T + n * np.eye(n)
    M_rate = rng.standard_normal((n, n))
    M_rate = M_rate + M_rate.T
    G = rng.standard_normal(n)
    tau = rng.standard_normal(n)
    return [
        ('energy residual', _tape_loss(lambda qd, qdd: energy_residual(
            EnergyInputs(qd, M, M_rate, G, qdd, tau))),
         [rng.standard_normal(n), rng.standard_normal(n)]),
        ('reach loss', _tape_loss(lambda r, ee: reach_loss(r, ee, np.array([0.3, -0.2]), weights)),
         [rng.standard_normal(n), rng.standard_normal(2)]),
        ('push loss', _tape_loss(lambda w, e: push_loss(0.5, w, e, weights.friction, 0.1)),
         [np.array(0.7), np.array(0.4)]),
        ('slide loss', _tape_loss(lambda dv, j: slide_loss(0.5, 0.1, dv, j, weights.momentum)),
         [rng.standard_normal(2), rng.standard_normal(2)]),
        ('grasp loss', _tape_loss(lambda z, f: grasp_loss(0.5, z, 0.8, f, weights.grasp)),
         [np.array(1.0), np.array(2.0)]),
        ('sliding friction residual', _tape_loss(lambda a, v: ops.total(physics_penalty(
            sliding_friction_residual(0.1, a, 0.5, 9.81, v)))),
         [rng.standard_normal((3, 2)), rng.uniform(0.5, 1.5, (3, 2)) * rng.choice([-1.0, 1.0], (3, 2))]),
    ]


def _pinn_fixture(rng: np.random.Generator, obs_size: int = 6, n: int = 2, samples: int = 16):
    pinn = PinnModel.create(obs_size, n, (16, 16), rng)
    A = rng.standard_normal((samples, n, n))
    batch = PinnBatch(obs=rng.standard_normal((samples, obs_size)), action=rng.standard_normal((samples, n)),
                      qdd_obs=rng.standard_normal((samples, n)), M=A @ np.transpose(A, (0, 2, 1)) + np.eye(n),
                      b=rng.standard_normal((samples, n)), weights=np.ones(samples),
                      qd=rng.standard_normal((samples, n)), G=rng.standard_normal((samples, n)),
                      M_rate=rng.standard_normal((samples, n, n)), tau_total=rng.standard_normal((samples, n)))
    return pinn, batch


def gradcheck(seed: int = 0, directions: int = 100) -> CheckReport:
    """
    Compare the analytic gradient of every loss with central finite differences.

    Args:
        seed: Seed of the networks, batches and directions
        directions: Random unit directions per loss

    Returns:
        CheckReport: worst relative error per loss
    """
    rng = generator(seed)
    results = []

    pinn, batch = _pinn_fixture(rng)
    error = grad_check(pinn.network, lambda net: _pinn_with(pinn, net, batch), rng, directions=directions)
    results.append(_result("proxy loss (mse + residual + energy)", error, GRADIENT_TOLERANCE))

    policy = GaussianPolicy.create(6, np.array([2.0, 1.0]), (16, 16), rng)
    penalty_batch = PenaltyBatch(batch.obs, batch.M, batch.b)
    for mode in ('mean', 'sampled'):
        error = grad_check(policy.network, lambda net, m=mode: piper_penalty(
            GaussianPolicy(net, policy.torque_limits), pinn, penalty_batch, m, generator(seed + 1)),
            rng, directions=directions)
        results.append(_result(f"physics penalty through the policy ({mode})", error, GRADIENT_TOLERANCE))

    for name, loss, point in _loss_checks(rng):
        error = check_gradients(loss, point, rng, directions=directions)
        results.append(_result(name, error, GRADIENT_TOLERANCE))

    report = CheckReport('gradcheck', results)
    logging.info(f"gradcheck: {len(results) - len(report.failures())}/{len(results)} checks passed")
    return report


def _pinn_with(pinn: PinnModel, network, batch: PinnBatch):
    candidate = PinnModel(network, pinn.n_links, pinn.normalizer)
    result = pinn_loss(candidate, batch, beta=0.1, beta_energy=0.1)
    return result.value, result.grads
