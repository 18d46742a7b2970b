import unittest

import numpy as np

from piper.common.errors import ContractViolation
from piper.common.rng import generator
from piper.config import config_from_dict
from piper.harness import metrics
from piper.harness.evaluation import evaluate_policy, run_episode, summarize_episodes
from piper.harness.metrics import EpisodeRow, MetricsRow
from piper.rl.policy import GaussianPolicy
from piper.rl.trainer import Trainer, train_seed
from piper.sim import envs
from piper.sim.spec import PUSH2D, REACH2D, SLIDE2D, make_env_spec

SMOKE = {
    'env_id': 'reach2d',
    'algorithm': 'ppo',
    'total_steps': 120,
    'eval_interval': 60,
    'eval_episodes': 3,
    'seeds': [42],
    'policy_hidden': [8],
    'critic_hidden': [8],
    'pinn_hidden': [8],
    'ppo': {'rollout_length': 40, 'epochs': 1, 'minibatch_size': 20},
    'pinn': {'warmup_steps': 20, 'batch_size': 16},
}


def rows(*pairs):
    return [MetricsRow(step=step, success_rate=rate, final_error_m=0.01) for step, rate in pairs]


class TestMetrics(unittest.TestCase):
    """Tests for the learning-curve metrics."""

    def test_steps_to_threshold(self):
        """Test the first step reaching the success threshold."""
        curve = rows((3000, 0.97), (1000, 0.5), (2000, 0.95))
        self.assertEqual(metrics.steps_to_threshold(curve, 0.95), 2000)
        self.assertIsNone(metrics.steps_to_threshold(curve, 0.99))

    def test_final_precision_uses_last_checkpoint(self):
        """Test that the final precision is read at the largest step."""
        curve = [MetricsRow(1000, 0.5, 0.2), MetricsRow(2000, 0.9, 0.0215), MetricsRow(1500, 0.8, 0.05)]
        self.assertAlmostEqual(metrics.final_precision(curve), 0.0215)
        with self.assertRaises(ContractViolation):
            metrics.final_precision([])

    def test_stability_sigma(self):
        """Test σ in percentage points over the trailing window."""
        alternating = [EpisodeRow(0, i, i % 2 == 0, 0.0) for i in range(100)]
        self.assertAlmostEqual(metrics.stability_sigma(alternating), 50.0)
        steady = [EpisodeRow(0, i, True, 0.0) for i in range(50)]
        self.assertEqual(metrics.stability_sigma(steady, window=50), 0.0)
        with self.assertRaises(ContractViolation):
            metrics.stability_sigma([])

    def test_sigma_window_is_trailing(self):
        """Test that only the last `window` episodes count, ordered by step."""
        early = [EpisodeRow(0, i, i % 2 == 0, 0.0) for i in range(10)]
        late = [EpisodeRow(100, i, True, 0.0) for i in range(10)]
        self.assertEqual(metrics.stability_sigma(late + early, window=10), 0.0)

    def test_percentage_gains(self):
        """Test the headline gain figures."""
        self.assertAlmostEqual(metrics.percentage_gain(46650, 32800), 29.689, places=3)
        self.assertAlmostEqual(metrics.percentage_gain(7.55, 2.15), 71.523, places=3)
        self.assertIsNone(metrics.percentage_gain(0.0, 1.0))
        self.assertIsNone(metrics.percentage_gain(None, 1.0))

    def test_gains_report(self):
        """Test rounding and the wall-clock overhead sign."""
        baseline = {'steps_to_threshold': 46650.0, 'steps_to_fallback': 40000.0, 'final_precision_m': 0.0755,
                    'sigma': 12.0, 'wall_secs': 100.0}
        piper = {'steps_to_threshold': 32800.0, 'steps_to_fallback': 30000.0, 'final_precision_m': 0.0215,
                 'sigma': 6.0, 'wall_secs': 125.0}
        report = metrics.gains(baseline, piper)
        self.assertEqual(report['efficiency_gain_pct_rounded'], 29.7)
        self.assertEqual(report['precision_gain_pct_rounded'], 71.5)
        self.assertEqual(report['stability_gain_pct_rounded'], 50.0)
        self.assertAlmostEqual(report['efficiency_gain_fallback_pct'], 25.0)
        self.assertAlmostEqual(report['overhead_pct'], 25.0)

    def test_aggregate_skips_unreached_thresholds(self):
        """Test that seeds never reaching the threshold are counted but not averaged."""
        per_seed = [
            metrics.SeedMetrics(1, 1000, 800, 0.01, 10.0, 5.0),
            metrics.SeedMetrics(2, None, 1200, 0.03, 20.0, 7.0),
        ]
        summary = metrics.aggregate(per_seed)
        self.assertEqual(summary['steps_to_threshold'], 1000.0)
        self.assertEqual(summary['reached_threshold'], 1)
        self.assertEqual(summary['steps_to_fallback'], 1000.0)
        self.assertAlmostEqual(summary['final_precision_m'], 0.02)
        self.assertEqual(summary['seeds'], [1, 2])

    def test_row_check(self):
        """Test the range checks on a metrics row."""
        with self.assertRaises(ContractViolation):
            MetricsRow(0, 1.5, 0.0).check()
        with self.assertRaises(ContractViolation):
            MetricsRow(0, 0.5, -1.0).check()

    def test_records_keep_blank_cells(self):
        """Test that missing optional values survive the CSV cell encoding."""
        row = MetricsRow(1000, 0.5, 0.125, l_phys=None, r_energy=float('nan'), pinn_loss=0.25, wall_secs=1.5)
        record = dict(zip(metrics.METRICS_COLUMNS, metrics.metrics_to_records([row])[0]))
        self.assertEqual(record['l_phys'], '')
        self.assertEqual(record['r_energy'], '')
        parsed = metrics.metrics_from_records([record])[0]
        self.assertEqual(parsed, row._replace(r_energy=None))


class TestEvaluation(unittest.TestCase):
    """Tests for evaluation episodes and constraint diagnostics."""

    def setUp(self):
        self.rng = generator(13)

    def _policy(self, spec):
        return GaussianPolicy.create(envs.observation_size(spec), spec.chain.torque_limits, (8,), self.rng)

    def test_evaluation_is_deterministic(self):
        """Test that equal episode seeds give equal outcomes."""
        spec = make_env_spec(REACH2D)
        policy = self._policy(spec)
        first = evaluate_policy(spec, policy, [1, 2, 3], step=0)
        second = evaluate_policy(spec, policy, [1, 2, 3], step=0)
        self.assertEqual(first, second)
        self.assertEqual(len(first.episodes), 3)
        self.assertEqual([e.episode for e in first.episodes], [0, 1, 2])

    def test_summary_matches_outcomes(self):
        """Test the success rate and mean error of a batch of episodes."""
        spec = make_env_spec(REACH2D)
        result = evaluate_policy(spec, self._policy(spec), [5, 6], step=10)
        summary = summarize_episodes(result.episodes)
        self.assertAlmostEqual(summary['success_rate'], result.success_rate)
        self.assertAlmostEqual(summary['final_error_m'], result.mean_final_error)
        self.assertTrue(all(e.step == 10 for e in result.episodes))

    def test_constraints_finite_for_every_task(self):
        """Test that each task reports a finite, non-negative constraint value."""
        for env_id in (REACH2D, PUSH2D, SLIDE2D):
            spec = make_env_spec(env_id)
            outcome = run_episode(spec, self._policy(spec), seed=0)
            self.assertTrue(np.isfinite(outcome.constraint), env_id)
            self.assertGreaterEqual(outcome.constraint, 0.0)

    def test_push_constraint_balances(self):
        """Test that the push energy balance holds over a whole episode."""
        spec = make_env_spec(PUSH2D)
        outcome = run_episode(spec, self._policy(spec), seed=3)
        self.assertLess(outcome.constraint, 1e-9)


class TestTrainer(unittest.TestCase):
    """Tests for the per-seed training loop."""

    def test_smoke_run_emits_rows(self):
        """Test that a tiny run completes with one row per evaluation."""
        result = train_seed(config_from_dict(SMOKE), 42)
        self.assertFalse(result.failed)
        self.assertEqual([r.step for r in result.rows], [60, 120])
        self.assertEqual(len(result.episodes), 6)
        self.assertIn('pinn', result.checkpoint)
        self.assertIsNotNone(result.rows[-1].pinn_loss)

    def test_runs_are_deterministic(self):
        """Test that two runs with the same seed agree apart from wall-clock time."""
        config = config_from_dict(SMOKE)
        first = [r._replace(wall_secs=0.0) for r in train_seed(config, 7).rows]
        second = [r._replace(wall_secs=0.0) for r in train_seed(config, 7).rows]
        self.assertEqual(first, second)

    def test_baseline_skips_proxy(self):
        """Test that a baseline run has no proxy and no physics columns."""
        result = train_seed(config_from_dict({**SMOKE, 'piper_enabled': False}), 42)
        self.assertNotIn('pinn', result.checkpoint)
        self.assertTrue(all(r.l_phys is None and r.pinn_loss is None for r in result.rows))

    def test_sac_smoke_run(self):
        """Test a tiny off-policy run."""
        config = config_from_dict({**SMOKE, 'algorithm': 'sac',
                                   'sac': {'batch_size': 16, 'learning_starts': 30}})
        result = Trainer(config, 3).run()
        self.assertFalse(result.failed)
        self.assertIn('critics', result.checkpoint)
        self.assertEqual(len(result.rows), 2)


if __name__ == '__main__':
    unittest.main()
