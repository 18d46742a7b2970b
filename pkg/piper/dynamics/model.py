"""
Model types for planar revolute chains and the JSON model-description parser.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np

from piper.common.errors import ContractViolation, ModelValidationError


def _frozen_array(values, name: str, length: Optional[int] = None) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1 or (length is not None and arr.shape[0] != length):
        raise ContractViolation(f"{name} must be a vector of length {length}, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ChainModel:
    """
    Immutable kinematic and inertial description of an N-link planar revolute chain.

    Joint 0 sits at the world origin. Link i has length l_i, mass m_i, a centre of mass
    located c_i along the link from its proximal joint, and rotational inertia I_i about
    that centre of mass.
    """
    lengths: np.ndarray
    masses: np.ndarray
    com_offsets: np.ndarray
    inertias: np.ndarray
    gravity: np.ndarray
    torque_limits: np.ndarray

    def __post_init__(self):
        n = len(np.atleast_1d(self.lengths))
        object.__setattr__(self, 'lengths', _frozen_array(self.lengths, 'lengths'))
        object.__setattr__(self, 'masses', _frozen_array(self.masses, 'masses', n))
        object.__setattr__(self, 'com_offsets', _frozen_array(self.com_offsets, 'com_offsets', n))
        object.__setattr__(self, 'inertias', _frozen_array(self.inertias, 'inertias', n))
        object.__setattr__(self, 'gravity', _frozen_array(self.gravity, 'gravity', 2))
        object.__setattr__(self, 'torque_limits', _frozen_array(self.torque_limits, 'torque_limits', n))
        validate_model(self)

    @property
    def n_links(self) -> int:
        return int(self.lengths.shape[0])

    @property
    def reach(self) -> float:
        """Radius of the reachable disk, Σ l_i."""
        return float(np.sum(self.lengths))

    def without_gravity(self) -> 'ChainModel':
        return ChainModel(self.lengths, self.masses, self.com_offsets, self.inertias,
                          np.zeros(2), self.torque_limits)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'links': [
                {'length': float(l), 'mass': float(m), 'com_offset': float(c), 'inertia_com': float(i)}
                for l, m, c, i in zip(self.lengths, self.masses, self.com_offsets, self.inertias)
            ],
            'gravity': self.gravity.tolist(),
            'torque_limit': self.torque_limits.tolist(),
        }


def validate_model(model: ChainModel) -> None:
    """Raise ModelValidationError naming the first field that breaks a ChainModel invariant."""
    if model.n_links < 1:
        raise ModelValidationError("chain needs at least one link", field='links')
    checks = (
        ('length', model.lengths, lambda v: v > 0, "must be > 0"),
        ('mass', model.masses, lambda v: v > 0, "must be > 0"),
        ('inertia_com', model.inertias, lambda v: v >= 0, "must be >= 0"),
    )
    for name, values, ok, message in checks:
        for i, value in enumerate(values):
            if not np.isfinite(value) or not ok(value):
                raise ModelValidationError(f"{message}, got {value}", field=f"links[{i}].{name}")
    for i, (c, l) in enumerate(zip(model.com_offsets, model.lengths)):
        if not np.isfinite(c) or c < 0 or c > l:
            raise ModelValidationError(f"must satisfy 0 <= com_offset <= length ({l}), got {c}",
                                       field=f"links[{i}].com_offset")
    if not np.all(np.isfinite(model.gravity)):
        raise ModelValidationError("must be finite", field='gravity')
    for i, limit in enumerate(model.torque_limits):
        if not np.isfinite(limit) or limit <= 0:
            raise ModelValidationError(f"must be > 0, got {limit}", field=f"torque_limit[{i}]")


@dataclass(frozen=True, eq=False)
class JointState:
    """Generalized coordinates q (rad) and velocities qd (rad/s)."""
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        q = _frozen_array(self.q, 'q')
        qd = _frozen_array(self.qd, 'qd', q.shape[0])
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise ContractViolation("joint state must be finite")
        object.__setattr__(self, 'q', q)
        object.__setattr__(self, 'qd', qd)


@dataclass(frozen=True, eq=False)
class ExternalForce:
    """A Cartesian force (N) applied at a world point rigidly attached to `link`."""
    link: int
    point: np.ndarray
    force: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'point', _frozen_array(self.point, 'point', 2))
        object.__setattr__(self, 'force', _frozen_array(self.force, 'force', 2))


ExternalForceSpec = Union[None, ExternalForce, Sequence[float], np.ndarray]


@dataclass(frozen=True, eq=False)
class DynamicsTerms:
    """Everything the oracle knows about one state: M, b, G, C and τ_ext."""
    M: np.ndarray
    b: np.ndarray
    G: np.ndarray
    C: np.ndarray
    tau_ext: np.ndarray = field(default=None)


def uniform_rod_inertia(mass: float, length: float) -> float:
    return mass * length ** 2 / 12.0


def model_from_dict(document: Dict[str, Any]) -> ChainModel:
    """
    Build a ChainModel from a parsed model description.

    Missing `inertia_com` defaults to the uniform-rod value m·l²/12, missing `com_offset`
    to l/2 and missing `gravity` to (0, -9.81).
    """
    if not isinstance(document, dict):
        raise ModelValidationError("model description must be a JSON object")
    unknown = set(document) - {'links', 'gravity', 'torque_limit'}
    if unknown:
        raise ModelValidationError(f"unknown keys {sorted(unknown)}", field=sorted(unknown)[0])

    links = document.get('links')
    if not isinstance(links, list) or not links:
        raise ModelValidationError("must be a non-empty list", field='links')

    lengths, masses, coms, inertias = [], [], [], []
    for i, link in enumerate(links):
        if not isinstance(link, dict):
            raise ModelValidationError("must be an object", field=f"links[{i}]")
        extra = set(link) - {'length', 'mass', 'com_offset', 'inertia_com'}
        if extra:
            raise ModelValidationError(f"unknown keys {sorted(extra)}", field=f"links[{i}].{sorted(extra)[0]}")
        for key in ('length', 'mass'):
            if key not in link:
                raise ModelValidationError("is required", field=f"links[{i}].{key}")
        try:
            length = float(link['length'])
            mass = float(link['mass'])
            com = float(link.get('com_offset', length / 2.0))
            inertia = float(link['inertia_com']) if 'inertia_com' in link else uniform_rod_inertia(mass, length)
        except (TypeError, ValueError) as e:
            raise ModelValidationError(f"non-numeric value ({e})", field=f"links[{i}]")
        lengths.append(length)
        masses.append(mass)
        coms.append(com)
        inertias.append(inertia)

    gravity = document.get('gravity', [0.0, -9.81])
    if not isinstance(gravity, (list, tuple)) or len(gravity) != 2:
        raise ModelValidationError("must be a 2-element list", field='gravity')

    torque_limit = document.get('torque_limit')
    if not isinstance(torque_limit, (list, tuple)) or len(torque_limit) != len(links):
        raise ModelValidationError(f"must list one limit per link ({len(links)})", field='torque_limit')

    try:
        return ChainModel(np.array(lengths), np.array(masses), np.array(coms), np.array(inertias),
                          np.array(gravity, dtype=np.float64), np.array(torque_limit, dtype=np.float64))
    except (TypeError, ValueError) as e:
        if isinstance(e, ModelValidationError):
            raise
        raise ModelValidationError(str(e))


def parse_model(text: str) -> ChainModel:
    """Parse a JSON model description; syntax errors report their line and column."""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelValidationError(f"invalid JSON at column {e.colno}: {e.msg}", line=e.lineno)
    return model_from_dict(document)


def load_model(path: str) -> ChainModel:
    """Load a chain model description file."""
    logging.debug(f"Loading chain model from {path}")
    with open(path, 'r', encoding='utf-8') as fh:
        return parse_model(fh.read())
