import os
import tempfile
import unittest
from unittest import mock

from piper import main as runner
from piper.common.errors import ContractViolation, TrainingAbortedError
from piper.config import config_from_dict
from piper.harness.metrics import EpisodeRow, MetricsRow
from piper.rl.trainer import SeedResult, Trainer
from piper.state import run_store


def seed_result(seed, curve, final_error=0.02, failed=False):
    rows = [MetricsRow(step, rate, final_error, wall_secs=float(step) / 100.0) for step, rate in curve]
    episodes = [EpisodeRow(curve[-1][0], i, i % 4 != 0, final_error) for i in range(8)]
    return SeedResult(seed, rows, episodes, [{'step': curve[-1][0], 'constraint': 0.1}], {'seed': seed},
                      failed=failed, error='diverged' if failed else None)


class TestRunExperiment(unittest.TestCase):
    """Tests for experiment orchestration and run comparison."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.config = config_from_dict({'seeds': [1, 2], 'run_name': 'baseline', 'piper_enabled': False})

    @mock.patch('piper.main.train_seed')
    def test_writes_artifacts_and_summary(self, train_seed):
        """Test the run directory layout and the summary document."""
        train_seed.side_effect = lambda config, seed: seed_result(seed, [(1000, 0.5), (2000, 0.96)])
        run_dir = runner.run_experiment(self.config, self.tmp.name)
        self.assertEqual(run_dir, os.path.join(self.tmp.name, 'baseline'))
        self.assertEqual(sorted(run_store.seed_dirs(run_dir)), [1, 2])
        summary = run_store.read_json(os.path.join(run_dir, run_store.SUMMARY_FILE))
        self.assertEqual(summary['aggregate']['steps_to_threshold'], 2000.0)
        self.assertEqual(summary['lambda_phys'], 0.0)
        self.assertEqual(summary['failed_seeds'], [])
        self.assertEqual(set(summary['constraints']), {'1', '2'})
        self.assertTrue(os.path.exists(os.path.join(run_dir, run_store.CONFIG_FILE)))

    @mock.patch('piper.main.train_seed')
    def test_failed_seed_does_not_stop_others(self, train_seed):
        """Test that an exception in one seed is recorded and the rest still run."""
        def train(config, seed):
            if seed == 2:
                raise TrainingAbortedError("PPO loss is not finite", {'component': 'ppo'})
            return seed_result(seed, [(1000, 0.96)])

        train_seed.side_effect = train
        run_dir = runner.run_experiment(self.config, self.tmp.name)
        summary = run_store.read_json(os.path.join(run_dir, run_store.SUMMARY_FILE))
        self.assertEqual(summary['failed_seeds'], [{'seed': 2, 'error': 'PPO loss is not finite'}])
        self.assertEqual(summary['aggregate']['seeds'], [1])
        self.assertEqual(list(run_store.seed_dirs(run_dir)), [1])

    @mock.patch('piper.main.train_seed')
    def test_compare_runs(self, train_seed):
        """Test gains computed from the raw CSVs, leaving out failed seeds."""
        train_seed.side_effect = lambda config, seed: (
            seed_result(seed, [(1000, 0.1)], final_error=9.0, failed=True) if seed == 2
            else seed_result(seed, [(1000, 0.5), (2000, 0.96)], final_error=0.04))
        baseline = runner.run_experiment(self.config, self.tmp.name)

        train_seed.side_effect = lambda config, seed: seed_result(seed, [(1000, 0.97)], final_error=0.01)
        piper = runner.run_experiment(self.config._replace(piper_enabled=True, run_name='piper'), self.tmp.name)

        report = runner.compare_runs(baseline, piper)
        self.assertEqual(report['baseline']['seeds'], [1])
        self.assertAlmostEqual(report['gains']['efficiency_gain_pct'], 50.0)
        self.assertAlmostEqual(report['gains']['precision_gain_pct'], 75.0)

    def test_compare_needs_seeds(self):
        """Test that a run without usable seeds cannot be compared."""
        empty = os.path.join(self.tmp.name, 'empty')
        os.makedirs(empty)
        with self.assertRaises(ContractViolation):
            runner.compare_runs(empty, empty)


class TestEvaluateCheckpoint(unittest.TestCase):
    """Tests for checkpoint evaluation."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        config = config_from_dict({'policy_hidden': [8], 'critic_hidden': [8], 'pinn_hidden': [8]})
        self.path = os.path.join(self.tmp.name, run_store.CHECKPOINT_FILE)
        run_store.write_json(self.path, Trainer(config, 0).checkpoint())

    def test_report(self):
        """Test the evaluation report of a fresh policy."""
        report = runner.evaluate_checkpoint(self.tmp.name, episodes=4, seed=1)
        self.assertEqual(report['episodes'], 4)
        self.assertGreaterEqual(report['success_rate'], 0.0)
        self.assertLessEqual(report['success_rate'], 1.0)
        self.assertGreater(report['final_error_m'], 0.0)
        self.assertEqual(report, runner.evaluate_checkpoint(self.path, episodes=4, seed=1))

    def test_needs_episodes(self):
        """Test that zero episodes is an argument error."""
        with self.assertRaises(ContractViolation):
            runner.evaluate_checkpoint(self.path, episodes=0, seed=0)


if __name__ == '__main__':
    unittest.main()
