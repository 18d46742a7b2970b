"""
Acceleration proxy Φ(s, a) -> q̈̂ and its physics-regularized training loss.

The proxy is a training-time coach only: nothing in the package plans or rolls out with it.
"""
import logging
from typing import Any, Dict, NamedTuple, Optional, Sequence

import numpy as np

from piper.autodiff import tape as ops
from piper.autodiff.checkpoint import network_from_dict, network_to_dict
from piper.autodiff.network import Gradients, Network
from piper.autodiff.optim import AdamState, adam_step, clip_grad_norm
from piper.autodiff.tape import Tape, Tensor
from piper.common.errors import ContractViolation, TrainingAbortedError
from piper.physics_losses import EnergyInputs, ResidualInputs, energy_residual, physics_residual

# Hidden layout that puts the 2-link reach proxy at 165,602 parameters
REFERENCE_HIDDEN = (400, 400)
# Down-weighting of finite-difference labels recorded under large contact torques
CONTACT_SAMPLE_WEIGHT = 0.5
_STD_FLOOR = 1e-3


class Normalizer(NamedTuple):
    """Affine maps for the proxy input (obs ++ action) and output (q̈); identity until fitted."""
    input_mean: np.ndarray
    input_std: np.ndarray
    output_mean: np.ndarray
    output_std: np.ndarray

    @classmethod
    def identity(cls, input_size: int, output_size: int) -> 'Normalizer':
        return cls(np.zeros(input_size), np.ones(input_size), np.zeros(output_size), np.ones(output_size))

    @classmethod
    def fit(cls, inputs: np.ndarray, outputs: np.ndarray) -> 'Normalizer':
        return cls(inputs.mean(axis=0), np.maximum(inputs.std(axis=0), _STD_FLOOR),
                   outputs.mean(axis=0), np.maximum(outputs.std(axis=0), _STD_FLOOR))


class PinnModel:
    def __init__(self, network: Network, n_links: int, normalizer: Optional[Normalizer] = None):
        if network.output_size != n_links:
            raise ContractViolation(f"proxy output size {network.output_size} != n_links {n_links}")
        self.network = network
        self.n_links = n_links
        self.normalizer = normalizer or Normalizer.identity(network.input_size, n_links)
        self.fitted = normalizer is not None

    @classmethod
    def create(cls, obs_size: int, n_links: int, hidden: Sequence[int], rng: np.random.Generator,
               activation: str = 'tanh') -> 'PinnModel':
        network = Network.initialize([obs_size + n_links, *hidden, n_links], rng, activation)
        return cls(network, n_links)

    @property
    def obs_size(self) -> int:
        return self.network.input_size - self.n_links

    def freeze_normalizer(self, normalizer: Normalizer) -> None:
        self.normalizer = normalizer
        self.fitted = True

    def apply(self, tape: Tape, obs, action, trainable: bool = True):
        """
        Record Φ(obs, action) on `tape`; either input may be a Tensor (the penalty path
        passes the policy's action tensor). Returns the output tensor and parameter tensors.
        """
        obs = obs if isinstance(obs, Tensor) else tape.constant(obs)
        action = action if isinstance(action, Tensor) else tape.constant(action)
        if obs.shape[-1] != self.obs_size or action.shape[-1] != self.n_links:
            raise ContractViolation(f"expected obs of size {self.obs_size} and action of size {self.n_links}, "
                                    f"got {obs.shape} and {action.shape}")
        norm = self.normalizer
        x = (ops.concat([obs, action], axis=-1) - norm.input_mean) / norm.input_std
        out, params = self.network.apply(tape, x, trainable=trainable)
        return out * norm.output_std + norm.output_mean, params

    def copy(self) -> 'PinnModel':
        clone = PinnModel(self.network.copy(), self.n_links, self.normalizer)
        clone.fitted = self.fitted
        return clone

    def to_dict(self) -> Dict[str, Any]:
        return {
            'network': network_to_dict(self.network),
            'n_links': self.n_links,
            'normalizer': {k: v.tolist() for k, v in self.normalizer._asdict().items()} if self.fitted else None,
        }

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> 'PinnModel':
        norm = document.get('normalizer')
        normalizer = Normalizer(**{k: np.array(v) for k, v in norm.items()}) if norm else None
        return cls(network_from_dict(document['network']), int(document['n_links']), normalizer)


def predict_accel(model: PinnModel, obs, action) -> np.ndarray:
    """Pure forward pass; batched inputs give batched predictions."""
    out, _ = model.apply(Tape(model.network.dtype), np.asarray(obs, dtype=np.float64),
                         np.asarray(action, dtype=np.float64), trainable=False)
    return out.value


class PinnBatch(NamedTuple):
    """
    Training rows for the proxy. The energy fields are optional and only used
    when the energy residual weight is positive.
    """
    obs: np.ndarray
    action: np.ndarray
    qdd_obs: np.ndarray
    M: np.ndarray
    b: np.ndarray
    weights: np.ndarray
    qd: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None
    M_rate: Optional[np.ndarray] = None
    tau_total: Optional[np.ndarray] = None

    @classmethod
    def from_records(cls, records: Sequence) -> 'PinnBatch':
        """Stack TransitionRecords (anything with obs, action, qd and an OracleSample)."""
        if not records:
            raise ContractViolation("cannot build a batch from zero records")
        oracle = [r.oracle for r in records]
        return cls(
            obs=np.stack([r.obs for r in records]),
            action=np.stack([r.action for r in records]),
            qdd_obs=np.stack([o.qdd_obs for o in oracle]),
            M=np.stack([o.M for o in oracle]),
            b=np.stack([o.b for o in oracle]),
            weights=np.array([CONTACT_SAMPLE_WEIGHT if o.contact_outlier else 1.0 for o in oracle]),
            qd=np.stack([r.qd for r in records]),
            G=np.stack([o.G for o in oracle]),
            M_rate=np.stack([o.M_rate for o in oracle]),
            tau_total=np.stack([r.action + o.tau_ext for r, o in zip(records, oracle)]),
        )

    def __len__(self):
        return self.obs.shape[0]

    def check(self) -> None:
        n = len(self)
        for name in ('action', 'qdd_obs', 'M', 'b', 'weights'):
            if getattr(self, name).shape[0] != n:
                raise ContractViolation(f"batch field {name} has {getattr(self, name).shape[0]} rows, expected {n}")


class PinnLoss(NamedTuple):
    value: float
    grads: Gradients
    mse: float
    residual: float
    energy: float


def pinn_loss(model: PinnModel, batch: PinnBatch, beta: float, beta_energy: float = 0.0) -> PinnLoss:
    """
    mean_b w_b·‖Φ(s,a) - q̈_obs‖² + β·mean_b ‖M·Φ(s,a) + b - a‖² (+ β_E·mean_b r_energy).

    The residual uses the stored action, so it stays valid for off-policy data.
    """
    if beta < 0 or beta_energy < 0:
        raise ContractViolation(f"loss weights must be >= 0, got beta={beta}, beta_energy={beta_energy}")
    batch.check()
    tape = Tape(model.network.dtype)
    qdd_hat, params = model.apply(tape, batch.obs, batch.action)

    error = ops.total(ops.square(qdd_hat - batch.qdd_obs), axis=-1)
    mse = ops.mean(error * batch.weights)
    residual = physics_residual(ResidualInputs(batch.M, batch.b, qdd_hat, batch.action))
    residual_term = ops.mean(ops.total(ops.square(residual), axis=-1))
    loss = mse + beta * residual_term

    energy_value = float('nan')
    if batch.qd is not None:
        energy = ops.mean(energy_residual(EnergyInputs(batch.qd, batch.M, batch.M_rate, batch.G, qdd_hat,
                                                       batch.tau_total)))
        energy_value = float(energy.value)
        if beta_energy > 0:
            loss = loss + beta_energy * energy

    grads = Gradients(tape.gradient(loss, params))
    return PinnLoss(float(loss.value), grads, float(mse.value), float(residual_term.value), energy_value)


def pinn_update(model: PinnModel, buffer, adam: AdamState, beta: float, batch_size: int,
                rng: np.random.Generator, beta_energy: float = 0.0,
                max_grad_norm: Optional[float] = None) -> Optional[PinnLoss]:
    """
    One Adam step on pinn_loss over a uniformly sampled batch.

    An empty buffer is a no-op and returns None. The normalizer is fitted and frozen
    on the first batch the proxy ever trains on.

    Raises:
        TrainingAbortedError: if the loss is not finite
    """
    if len(buffer) == 0:
        logging.warning("Skipping proxy update: buffer is empty")
        return None
    batch = PinnBatch.from_records(buffer.sample(rng, batch_size))
    if not model.fitted:
        model.freeze_normalizer(Normalizer.fit(np.concatenate([batch.obs, batch.action], axis=-1), batch.qdd_obs))
        logging.info(f"Froze proxy normalizer on {len(batch)} samples")

    result = pinn_loss(model, batch, beta, beta_energy)
    if not np.isfinite(result.value) or not result.grads.is_finite():
        raise TrainingAbortedError("proxy loss is not finite",
                                   diagnostics={'component': 'pinn', 'loss': result.value, 'mse': result.mse,
                                                'residual': result.residual})
    grads, _ = clip_grad_norm(result.grads, max_grad_norm)
    adam_step(model.network, grads, adam)
    return result
