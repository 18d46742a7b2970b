"""
The per-seed training loop: collect with the oracle, train the proxy, update the policy, evaluate.
"""
import logging
import math
import time
from typing import Any, Callable, Dict, List, NamedTuple, Optional

import numpy as np

from piper import oracle
from piper.autodiff.checkpoint import network_from_dict, network_to_dict
from piper.autodiff.network import Network
from piper.autodiff.optim import AdamState
from piper.common.errors import SimulationDivergedError, TrainingAbortedError
from piper.common.rng import make_streams
from piper.config import ExperimentConfig, build_env_spec
from piper.harness.evaluation import evaluate_policy
from piper.harness.metrics import EpisodeRow, MetricsRow
from piper.pinn import PinnModel, pinn_update
from piper.rl.buffers import ReplayBuffer, RolloutBuffer, TransitionRecord
from piper.rl.policy import GaussianPolicy, sample_action
from piper.rl.ppo import ppo_update
from piper.rl.sac import Temperature, TwinCritics, sac_update
from piper.sim import envs

CHECKPOINT_VERSION = 1
_SEED_RANGE = 2 ** 31


class SeedResult(NamedTuple):
    seed: int
    rows: List[MetricsRow]
    episodes: List[EpisodeRow]
    constraints: List[Dict[str, float]]
    checkpoint: Dict[str, Any]
    failed: bool = False
    error: Optional[str] = None
    diagnostics: Dict[str, Any] = {}


def _mean_or_none(values: List[float]) -> Optional[float]:
    present = [v for v in values if v is not None and not math.isnan(v)]
    return float(np.mean(present)) if present else None


class Trainer:
    """Owns every network, optimizer and buffer of one seeded run."""

    def __init__(self, config: ExperimentConfig, seed: int):
        self.config = config
        self.seed = seed
        self.streams = make_streams(seed)
        self.spec = build_env_spec(config)
        obs_size = envs.observation_size(self.spec)
        limits = self.spec.chain.torque_limits

        self.policy = GaussianPolicy.create(obs_size, limits, config.policy_hidden, self.streams.policy_init,
                                            config.activation)
        self.policy_adam = AdamState.for_network(self.policy.network, config.ppo.lr if config.algorithm == 'ppo'
                                                 else config.sac.lr)
        if config.algorithm == 'ppo':
            self.value_net = Network.initialize([obs_size, *config.critic_hidden, 1], self.streams.critic_init,
                                                config.activation)
            self.value_adam = AdamState.for_network(self.value_net, config.ppo.lr)
            self.rollout = RolloutBuffer(config.ppo.rollout_length)
        else:
            self.critics = TwinCritics.create(obs_size, limits, config.critic_hidden, self.streams.critic_init,
                                              config.activation)
            self.q1_adam = AdamState.for_network(self.critics.q1, config.sac.lr)
            self.q2_adam = AdamState.for_network(self.critics.q2, config.sac.lr)
            self.temperature = Temperature(config.sac.init_alpha)
            self.alpha_adam = AdamState.for_network(self.temperature, config.sac.alpha_lr)
            self.replay = ReplayBuffer()

        self.pinn = None
        if config.piper_enabled:
            self.pinn = PinnModel.create(obs_size, self.spec.chain.n_links, config.pinn_hidden,
                                         self.streams.pinn_init, config.activation)
            self.pinn_adam = AdamState.for_network(self.pinn.network, config.pinn.lr)
            self.pinn_buffer = ReplayBuffer(config.pinn.buffer_capacity)
            energy = config.pinn.energy_in_loss
            self.beta_energy = config.weights.pinn_beta if (energy if energy is not None
                                                            else self.spec.has_object) else 0.0

        self.eval_seeds = self.streams.evaluation.integers(0, _SEED_RANGE, size=config.eval_episodes)
        self.step = 0
        self._since_eval: Dict[str, List[float]] = {'l_phys': [], 'pinn_loss': [], 'r_energy': []}

    def _penalty_coach(self) -> Optional[PinnModel]:
        # the penalty only switches on once the proxy has trained on real data
        if self.pinn is None or not self.pinn.fitted or self.config.lambda_phys == 0:
            return None
        return self.pinn

    def _value(self, obs) -> float:
        return float(self.value_net(obs)[0])

    def _collect(self, world, goal, t_in_episode):
        spec = self.spec
        obs = envs.observe(spec, world, goal)
        action = sample_action(self.policy, obs, self.streams.exploration)
        next_world, contact = envs.advance(spec, world, action.action)
        labels = oracle.sample(spec, world, next_world, contact, outlier_threshold=self.config.pinn.outlier_threshold)
        episode_end = t_in_episode + 1 >= spec.horizon
        next_obs = envs.observe(spec, next_world, goal)
        record = TransitionRecord(obs=obs, action=action.action, raw=action.raw, log_prob=float(action.log_prob),
                                  reward=envs.reward(spec, next_world, goal), next_obs=next_obs, terminal=False,
                                  episode_end=episode_end, qd=world.arm.qd, oracle=labels)
        return record, next_world

    def _train_pinn(self) -> None:
        params = self.config.pinn
        if self.pinn is None or self.step < params.warmup_steps or self.step % params.update_every:
            return
        result = pinn_update(self.pinn, self.pinn_buffer, self.pinn_adam, self.config.weights.pinn_beta,
                             params.batch_size, self.streams.pinn_sampling, self.beta_energy, params.max_grad_norm)
        if result is not None:
            self._since_eval['pinn_loss'].append(result.value)
            self._since_eval['r_energy'].append(result.energy)

    def _train_policy(self) -> None:
        config = self.config
        coach = self._penalty_coach()
        if config.algorithm == 'ppo':
            if not self.rollout.full:
                return
            report = ppo_update(self.policy, self.value_net, self.rollout, config.ppo, self.policy_adam,
                                self.value_adam, self.streams.sampling, pinn=coach,
                                lambda_phys=config.lambda_phys if coach is not None else 0.0,
                                penalty_mode=config.penalty_mode, penalty_rng=self.streams.penalty)
            self.rollout.clear()
        else:
            params = config.sac
            if (self.step < params.learning_starts or len(self.replay) < params.batch_size
                    or self.step % params.update_every):
                return
            report = sac_update(self.policy, self.critics, self.temperature, self.replay, params, self.policy_adam,
                                self.q1_adam, self.q2_adam, self.alpha_adam, self.streams.sampling, pinn=coach,
                                lambda_phys=config.lambda_phys if coach is not None else 0.0,
                                penalty_mode=config.penalty_mode, penalty_rng=self.streams.penalty)
        self._since_eval['l_phys'].append(report['l_phys'])

    def evaluate(self, started: float):
        fitted = self.pinn if self.pinn is not None and self.pinn.fitted else None
        result = evaluate_policy(self.spec, self.policy, self.eval_seeds, self.step, self.config.weights, fitted)
        row = MetricsRow(step=self.step, success_rate=result.success_rate, final_error_m=result.mean_final_error,
                         l_phys=_mean_or_none(self._since_eval['l_phys']),
                         r_energy=_mean_or_none(self._since_eval['r_energy']),
                         pinn_loss=_mean_or_none(self._since_eval['pinn_loss']),
                         wall_secs=time.perf_counter() - started).check()
        self._since_eval = {key: [] for key in self._since_eval}
        logging.info(f"seed {self.seed} step {row.step}: success {row.success_rate:.2f}, "
                     f"final error {row.final_error_m * 1000:.2f} mm",
                     extra={'seed': self.seed, **row._asdict()})
        return row, result

    def run(self, on_row: Optional[Callable[[MetricsRow], None]] = None) -> SeedResult:
        """
        Train for config.total_steps environment steps, evaluating every eval_interval steps.

        Divergence and non-finite losses end the run early; the result is then marked failed
        and keeps every row recorded so far.
        """
        config = self.config
        rows, episodes, constraints = [], [], []
        started = time.perf_counter()
        logging.info(f"Starting seed {self.seed}: {config.algorithm} on {config.env_id}, "
                     f"piper={'on' if config.piper_enabled else 'off'}, {config.total_steps} steps")
        world, goal = envs.reset(self.spec, int(self.streams.env.integers(_SEED_RANGE)))
        t_in_episode = 0
        try:
            while self.step < config.total_steps:
                record, world = self._collect(world, goal, t_in_episode)
                self.step += 1
                t_in_episode += 1
                if config.algorithm == 'ppo':
                    self.rollout.add(record, self._value(record.obs), self._value(record.next_obs))
                else:
                    self.replay.add(record)
                if self.pinn is not None:
                    self.pinn_buffer.add(record)
                if record.episode_end:
                    world, goal = envs.reset(self.spec, int(self.streams.env.integers(_SEED_RANGE)))
                    t_in_episode = 0

                self._train_pinn()
                self._train_policy()

                if self.step % config.eval_interval == 0:
                    row, result = self.evaluate(started)
                    rows.append(row)
                    episodes.extend(result.episodes)
                    constraints.append({'step': self.step, 'constraint': result.constraint})
                    if on_row is not None:
                        on_row(row)
        except (TrainingAbortedError, SimulationDivergedError) as e:
            logging.error(f"Seed {self.seed} failed at step {self.step}: {e}", exc_info=True)
            diagnostics = dict(getattr(e, 'diagnostics', {}) or {})
            diagnostics.update({'step': self.step, 'error': str(e)})
            return SeedResult(self.seed, rows, episodes, constraints, self.checkpoint(), failed=True, error=str(e),
                              diagnostics=diagnostics)

        logging.info(f"Finished seed {self.seed} in {time.perf_counter() - started:.1f}s")
        return SeedResult(self.seed, rows, episodes, constraints, self.checkpoint())

    def checkpoint(self) -> Dict[str, Any]:
        document = {
            'format_version': CHECKPOINT_VERSION,
            'seed': self.seed,
            'step': self.step,
            'config': self.config.to_dict(),
            'policy': network_to_dict(self.policy.network),
            'torque_limits': self.policy.torque_limits.tolist(),
        }
        if self.config.algorithm == 'ppo':
            document['value'] = network_to_dict(self.value_net)
        else:
            document['critics'] = {'q1': network_to_dict(self.critics.q1), 'q2': network_to_dict(self.critics.q2),
                                   'alpha': self.temperature.alpha}
        if self.pinn is not None:
            document['pinn'] = self.pinn.to_dict()
        return document


def policy_from_checkpoint(document: Dict[str, Any]) -> GaussianPolicy:
    return GaussianPolicy(network_from_dict(document['policy']), document['torque_limits'])


def train_seed(config: ExperimentConfig, seed: int) -> SeedResult:
    """Entry point for worker processes."""
    return Trainer(config, seed).run()
