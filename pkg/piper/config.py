import json
import os
from typing import Any, Dict, NamedTuple, Optional, Tuple

from piper.common.errors import ConfigError, ContractViolation
from piper.dynamics.model import load_model, model_from_dict
from piper.physics_losses import ConstraintWeights
from piper.rl.penalty import PENALTY_MODES
from piper.rl.ppo import PpoParams
from piper.rl.sac import SacParams
from piper.sim.spec import ENV_BUILDERS, EnvSpec, make_env_spec

ALGORITHMS = ('ppo', 'sac')
ACTIVATIONS = ('tanh', 'relu')
DEFAULT_SEEDS = (42, 43, 44, 45, 46)
TRUE_STRINGS = ('true', '1', 't', 'yes')


class PinnParams(NamedTuple):
    lr: float = 1e-3
    batch_size: int = 256
    warmup_steps: int = 1000
    update_every: int = 1
    buffer_capacity: int = 100_000
    max_grad_norm: Optional[float] = None
    # None: add the energy residual for the object tasks only
    energy_in_loss: Optional[bool] = None
    outlier_threshold: float = 0.5


class ExperimentConfig(NamedTuple):
    """Configuration for one experiment: an environment, an algorithm and a seed set."""
    # Task
    env_id: str = 'reach2d'
    env_overrides: Dict[str, Any] = {}
    model_path: Optional[str] = None
    model: Optional[Dict[str, Any]] = None

    # Algorithm
    algorithm: str = 'ppo'
    piper_enabled: bool = True
    penalty_mode: str = 'mean'
    weights: ConstraintWeights = ConstraintWeights()
    ppo: PpoParams = PpoParams()
    sac: SacParams = SacParams()
    pinn: PinnParams = PinnParams()

    # Networks
    policy_hidden: Tuple[int, ...] = (64, 64)
    critic_hidden: Tuple[int, ...] = (64, 64)
    pinn_hidden: Tuple[int, ...] = (128, 128)
    activation: str = 'tanh'

    # Schedule and evaluation
    total_steps: int = 200_000
    eval_interval: int = 1000
    eval_episodes: int = 100
    seeds: Tuple[int, ...] = DEFAULT_SEEDS
    success_threshold: float = 0.95
    fallback_threshold: float = 0.90
    sigma_window: int = 100

    # Execution
    workers: int = 1
    run_name: Optional[str] = None

    @property
    def lambda_phys(self) -> float:
        return self.weights.lambda_phys(self.algorithm) if self.piper_enabled else 0.0

    def to_dict(self) -> Dict[str, Any]:
        document = self._asdict()
        for section in _SECTIONS:
            document[section] = getattr(self, section)._asdict()
        for key in ('policy_hidden', 'critic_hidden', 'pinn_hidden', 'seeds'):
            document[key] = list(document[key])
        return document


_SECTIONS = {
    'weights': ConstraintWeights,
    'ppo': PpoParams,
    'sac': SacParams,
    'pinn': PinnParams,
}


def _environment_values() -> Dict[str, Any]:
    """Values taken from PIPER_* environment variables, when set."""
    values: Dict[str, Any] = {}
    if os.environ.get('PIPER_ENV_ID'):
        values['env_id'] = os.environ['PIPER_ENV_ID']
    if os.environ.get('PIPER_ALGORITHM'):
        values['algorithm'] = os.environ['PIPER_ALGORITHM']
    if os.environ.get('PIPER_TOTAL_STEPS'):
        values['total_steps'] = os.environ['PIPER_TOTAL_STEPS']
    if os.environ.get('PIPER_SEEDS'):
        values['seeds'] = [s for s in os.environ['PIPER_SEEDS'].split(',') if s.strip()]
    if os.environ.get('PIPER_PIPER_ENABLED'):
        values['piper_enabled'] = os.environ['PIPER_PIPER_ENABLED']
    if os.environ.get('PIPER_WORKERS'):
        values['workers'] = os.environ['PIPER_WORKERS']
    return values


def _merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if key in _SECTIONS and isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    return merged


def _as_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).lower() in TRUE_STRINGS


def _coerce(name: str, value, default, problems) -> Any:
    """Convert `value` to the type of `default`, collecting a problem on failure."""
    try:
        if value is None:
            return None
        if isinstance(default, bool):
            return _as_bool(value)
        if isinstance(value, bool) and isinstance(default, (int, float, tuple)):
            raise ValueError("booleans are not numbers")
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"{value} is not an integer")
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            return tuple(int(v) for v in value)
        return value
    except (TypeError, ValueError) as e:
        problems.append(f"{name}: cannot convert {value!r} ({e})")
        return default


def _section(name: str, cls, values, problems):
    if not isinstance(values, dict):
        problems.append(f"{name} must be an object")
        return cls()
    unknown = sorted(set(values) - set(cls._fields))
    problems.extend(f"unknown key {name}.{key}" for key in unknown)
    defaults = cls()
    fields = {}
    for key in cls._fields:
        if key in values:
            default = getattr(defaults, key)
            if default is None and isinstance(values[key], bool):
                fields[key] = values[key]
            else:
                # optional numeric fields default to None
                fields[key] = _coerce(f"{name}.{key}", values[key], default if default is not None else 0.0, problems)
    return cls(**fields)


def config_from_dict(document: Dict[str, Any]) -> ExperimentConfig:
    """
    Build and validate an ExperimentConfig.

    Raises:
        ConfigError: listing every unknown key and invalid field
    """
    problems = []
    unknown = sorted(set(document) - set(ExperimentConfig._fields))
    problems.extend(f"unknown key {key}" for key in unknown)

    defaults = ExperimentConfig()
    fields: Dict[str, Any] = {}
    for key in ExperimentConfig._fields:
        if key not in document:
            continue
        value = document[key]
        if key in _SECTIONS:
            fields[key] = _section(key, _SECTIONS[key], value, problems)
        elif key in ('env_overrides', 'model'):
            if value is not None and not isinstance(value, dict):
                problems.append(f"{key} must be an object")
            else:
                fields[key] = dict(value) if value is not None else ({} if key == 'env_overrides' else None)
        elif key in ('model_path', 'run_name'):
            fields[key] = None if value is None else str(value)
        else:
            fields[key] = _coerce(key, value, getattr(defaults, key), problems)

    config = defaults._replace(**fields)
    problems.extend(validate_config(config))
    if problems:
        raise ConfigError(problems)
    return config


def validate_config(config: ExperimentConfig):
    problems = []
    if config.env_id not in ENV_BUILDERS:
        problems.append(f"env_id must be one of {sorted(ENV_BUILDERS)}, got {config.env_id!r}")
    if config.algorithm not in ALGORITHMS:
        problems.append(f"algorithm must be one of {ALGORITHMS}, got {config.algorithm!r}")
    if config.penalty_mode not in PENALTY_MODES:
        problems.append(f"penalty_mode must be one of {PENALTY_MODES}, got {config.penalty_mode!r}")
    if config.activation not in ACTIVATIONS:
        problems.append(f"activation must be one of {ACTIVATIONS}, got {config.activation!r}")
    for key in ('total_steps', 'eval_interval', 'eval_episodes', 'workers', 'sigma_window'):
        if getattr(config, key) < 1:
            problems.append(f"{key} must be >= 1, got {getattr(config, key)}")
    if not config.seeds:
        problems.append("seeds must not be empty")
    for key in ('policy_hidden', 'critic_hidden', 'pinn_hidden'):
        if any(size < 1 for size in getattr(config, key)):
            problems.append(f"{key} sizes must be >= 1")
    for key in ('success_threshold', 'fallback_threshold'):
        if not 0.0 <= getattr(config, key) <= 1.0:
            problems.append(f"{key} must lie in [0, 1], got {getattr(config, key)}")
    if config.model is not None and config.model_path is not None:
        problems.append("give either model or model_path, not both")
    problems.extend(config.weights.problems())
    for section, names in (('ppo', ('rollout_length', 'epochs', 'minibatch_size')),
                           ('sac', ('batch_size', 'update_every')),
                           ('pinn', ('batch_size', 'update_every', 'buffer_capacity'))):
        params = getattr(config, section)
        problems.extend(f"{section}.{name} must be >= 1, got {getattr(params, name)}"
                        for name in names if getattr(params, name) < 1)
    for section in ('ppo', 'sac', 'pinn'):
        if not getattr(config, section).lr > 0:
            problems.append(f"{section}.lr must be > 0")
    if not 0.0 < config.sac.tau < 1.0:
        problems.append(f"sac.tau must lie in (0, 1), got {config.sac.tau}")
    if not problems:
        problems.extend(_environment_problems(config))
    return problems


def build_env_spec(config: ExperimentConfig) -> EnvSpec:
    """Environment spec for the config, with an inline or file-based chain model if given."""
    chain = None
    if config.model is not None:
        chain = model_from_dict(config.model)
    elif config.model_path:
        chain = load_model(config.model_path)
    return make_env_spec(config.env_id, chain, config.env_overrides)


def _environment_problems(config: ExperimentConfig):
    chain = None
    try:
        if config.model is not None:
            chain = model_from_dict(config.model)
        elif config.model_path:
            chain = load_model(config.model_path)
    except OSError as e:
        return [f"model_path: cannot read {config.model_path!r} ({e.strerror or e})"]
    except (ContractViolation, TypeError, ValueError) as e:
        return [f"{'model' if config.model is not None else 'model_path'}: {e}"]
    try:
        make_env_spec(config.env_id, chain, config.env_overrides)
    except (ContractViolation, TypeError, ValueError) as e:
        return [f"env_overrides: {e}"]
    return []


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Load configuration from environment variables, an optional JSON file and explicit overrides.

    Later layers win: environment < file < overrides.

    Args:
        path: Optional JSON config file
        overrides: Optional values applied last (e.g. from the command line)

    Returns:
        ExperimentConfig: validated configuration

    Raises:
        ConfigError: for unknown keys, unparseable files and invalid values
    """
    document = _environment_values()
    if path:
        try:
            with open(path, 'r', encoding='utf-8') as fh:
                from_file = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError([f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}"])
        except OSError as e:
            raise ConfigError([f"{path}: {e}"])
        if not isinstance(from_file, dict):
            raise ConfigError([f"{path}: top level must be an object"])
        document = _merge(document, from_file)
    if overrides:
        document = _merge(document, overrides)
    return config_from_dict(document)
