"""
Environment specifications and the registry of bundled goal-conditioned environments.
"""
import logging
from typing import Any, Dict, NamedTuple, Optional, Tuple

import numpy as np

from piper.common.errors import ContractViolation
from piper.dynamics.model import ChainModel, model_from_dict

REACH2D = 'reach2d'
PUSH2D = 'push2d'
SLIDE2D = 'slide2d'
REWARD_MODES = ('sparse', 'dense')


class ContactParams(NamedTuple):
    """Penalty contact between the end-effector disk and the object disk, plus table friction."""
    stiffness: float = 2.0e4        # N/m
    damping: float = 10.0           # N·s/m
    ee_radius: float = 0.02         # m
    object_radius: float = 0.03     # m
    v_stick: float = 1.0e-3         # m/s
    table_gravity: float = 9.81     # m/s², presses the object onto the table


class EnvSpec(NamedTuple):
    """Everything needed to reset and step one environment."""
    env_id: str
    chain: ChainModel
    dt: float = 0.002
    horizon: int = 50
    frame_skip: int = 10
    # (x_min, x_max, y_min, y_max) box for goal sampling
    goal_region: Tuple[float, float, float, float] = (-0.8, 0.8, -0.8, 0.8)
    # (x_min, x_max, y_min, y_max) box for the initial object position
    object_region: Optional[Tuple[float, float, float, float]] = None
    object_mass: float = 0.1
    friction_mu: float = 0.5
    reward_mode: str = 'dense'
    success_radius: float = 0.05
    init_q: Tuple[float, ...] = ()
    init_noise: float = 0.1
    contact: ContactParams = ContactParams()

    @property
    def has_object(self) -> bool:
        return self.env_id in (PUSH2D, SLIDE2D)

    @property
    def control_dt(self) -> float:
        return self.dt * self.frame_skip


def validate_spec(spec: EnvSpec) -> EnvSpec:
    problems = []
    if spec.env_id not in ENV_BUILDERS:
        problems.append(f"env_id must be one of {sorted(ENV_BUILDERS)}, got {spec.env_id!r}")
    if not spec.dt > 0:
        problems.append(f"dt must be > 0, got {spec.dt}")
    if spec.horizon < 1:
        problems.append(f"horizon must be >= 1, got {spec.horizon}")
    if spec.frame_skip < 1:
        problems.append(f"frame_skip must be >= 1, got {spec.frame_skip}")
    if spec.friction_mu < 0:
        problems.append(f"friction_mu must be >= 0, got {spec.friction_mu}")
    if spec.reward_mode not in REWARD_MODES:
        problems.append(f"reward_mode must be one of {REWARD_MODES}, got {spec.reward_mode!r}")
    if spec.success_radius < 0:
        problems.append(f"success_radius must be >= 0, got {spec.success_radius}")
    if spec.has_object and not spec.object_mass > 0:
        problems.append(f"object_mass must be > 0, got {spec.object_mass}")
    if len(spec.init_q) != spec.chain.n_links:
        problems.append(f"init_q must have {spec.chain.n_links} entries, got {len(spec.init_q)}")
    if problems:
        raise ContractViolation("; ".join(problems))
    return spec


def _rod_chain(lengths, masses, gravity, torque_limits) -> ChainModel:
    return model_from_dict({
        'links': [{'length': l, 'mass': m, 'com_offset': l / 2.0} for l, m in zip(lengths, masses)],
        'gravity': list(gravity),
        'torque_limit': list(torque_limits),
    })


def _reach2d(chain: Optional[ChainModel]) -> EnvSpec:
    # vertical plane: the arm hangs under gravity and must hold the goal pose
    chain = chain or _rod_chain((0.5, 0.5), (0.5, 0.5), (0.0, -9.81), (8.0, 4.0))
    init_q = (-np.pi / 2,) + (0.0,) * (chain.n_links - 1)
    return EnvSpec(env_id=REACH2D, chain=chain, horizon=50, goal_region=(-0.8, 0.8, -0.8, 0.5),
                   init_q=init_q)


def _push2d(chain: Optional[ChainModel]) -> EnvSpec:
    # horizontal plane: G(q) = 0, the block slides on the table with Coulomb friction
    chain = chain or _rod_chain((0.5, 0.5), (0.5, 0.3), (0.0, 0.0), (4.0, 2.0))
    init_q = (0.0, 1.8) + (0.0,) * (chain.n_links - 2)
    return EnvSpec(env_id=PUSH2D, chain=chain, horizon=100, goal_region=(0.4, 0.75, -0.3, 0.3),
                   object_region=(0.45, 0.6, -0.15, 0.15), init_q=init_q[:chain.n_links])


def _slide2d(chain: Optional[ChainModel]) -> EnvSpec:
    # the goal lies outside the reachable disk, so the puck has to be struck
    chain = chain or _rod_chain((0.5, 0.5), (0.5, 0.3), (0.0, 0.0), (4.0, 2.0))
    init_q = (0.0, 1.8) + (0.0,) * (chain.n_links - 2)
    return EnvSpec(env_id=SLIDE2D, chain=chain, horizon=100, goal_region=(1.0, 1.6, -0.5, 0.5),
                   object_region=(0.5, 0.6, -0.1, 0.1), init_q=init_q[:chain.n_links])


# Map env ids to their spec builders
ENV_BUILDERS = {
    REACH2D: _reach2d,
    PUSH2D: _push2d,
    SLIDE2D: _slide2d,
}


def make_env_spec(env_id: str, chain: Optional[ChainModel] = None,
                  overrides: Optional[Dict[str, Any]] = None) -> EnvSpec:
    """
    Build the spec for a registered environment, optionally with another chain and field overrides.

    Raises:
        ContractViolation: if the env id is not registered or the result is invalid
    """
    env_id = env_id.lower()
    if env_id not in ENV_BUILDERS:
        supported = ', '.join(ENV_BUILDERS.keys())
        raise ContractViolation(f"Unsupported environment: {env_id}. Supported environments: {supported}")

    spec = ENV_BUILDERS[env_id](chain)
    overrides = dict(overrides or {})
    if 'contact' in overrides and isinstance(overrides['contact'], dict):
        overrides['contact'] = spec.contact._replace(**overrides['contact'])
    for key in ('goal_region', 'object_region', 'init_q'):
        if key in overrides and overrides[key] is not None:
            overrides[key] = tuple(overrides[key])
    unknown = set(overrides) - set(EnvSpec._fields)
    if unknown:
        raise ContractViolation(f"Unknown environment fields: {sorted(unknown)}")
    spec = spec._replace(**overrides)

    logging.debug(f"Built {env_id} spec: dt={spec.dt}, frame_skip={spec.frame_skip}, horizon={spec.horizon}")
    return validate_spec(spec)
