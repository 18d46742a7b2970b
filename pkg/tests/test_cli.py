import io
import os
import tempfile
import unittest
from contextlib import redirect_stdout
from unittest import mock

from piper import cli
from piper.common.errors import SimulationDivergedError
from piper.harness.checks import CheckReport, CheckResult


class TestCli(unittest.TestCase):
    """Tests for argument parsing and exit codes."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        patcher = mock.patch.dict(os.environ, {}, clear=True)
        patcher.start()
        self.addCleanup(patcher.stop)

    def test_train_overrides(self):
        """Test that command-line flags become config overrides."""
        args = cli.build_parser().parse_args(['train', '--seeds', '1', '2', '--total-steps', '500', '--no-piper',
                                              '--run-name', 'demo'])
        self.assertEqual(cli._overrides(args), {'run_name': 'demo', 'seeds': [1, 2], 'total_steps': 500,
                                                'piper_enabled': False})

    @mock.patch('piper.cli.runner.run_experiment')
    def test_train_prints_run_dir(self, run_experiment):
        """Test a successful train command."""
        run_experiment.return_value = os.path.join(self.tmp.name, 'run')
        out = io.StringIO()
        with redirect_stdout(out):
            code = cli.main(['train', '--total-steps', '100', '--run-root', self.tmp.name])
        self.assertEqual(code, cli.EXIT_OK)
        config, root = run_experiment.call_args[0]
        self.assertEqual(config.total_steps, 100)
        self.assertEqual(root, self.tmp.name)
        self.assertIn('run', out.getvalue())

    @mock.patch('piper.cli.runner.run_experiment')
    def test_config_error_exit_code(self, run_experiment):
        """Test that an invalid config exits with 2 before training."""
        path = os.path.join(self.tmp.name, 'bad.json')
        with open(path, 'w') as fh:
            fh.write('{"algorithm": "dqn"}')
        with mock.patch('sys.stderr', new_callable=io.StringIO):
            self.assertEqual(cli.main(['train', '--config', path]), cli.EXIT_CONFIG)
        run_experiment.assert_not_called()

    @mock.patch('piper.cli.runner.evaluate_checkpoint')
    def test_runtime_error_exit_code(self, evaluate_checkpoint):
        """Test that package errors exit with 1."""
        evaluate_checkpoint.side_effect = SimulationDivergedError("non-finite state")
        with mock.patch('sys.stderr', new_callable=io.StringIO):
            self.assertEqual(cli.main(['eval', '--checkpoint', 'x']), cli.EXIT_FAILURE)

    def test_missing_checkpoint_exit_code(self):
        """Test that an unreadable checkpoint exits with 1."""
        with mock.patch('sys.stderr', new_callable=io.StringIO):
            code = cli.main(['eval', '--checkpoint', os.path.join(self.tmp.name, 'absent.json')])
        self.assertEqual(code, cli.EXIT_FAILURE)

    @mock.patch('piper.cli.runner.compare_runs')
    def test_compare_prints_json(self, compare_runs):
        """Test that compare prints the gains document."""
        compare_runs.return_value = {'gains': {'efficiency_gain_pct': 29.7}}
        out = io.StringIO()
        with redirect_stdout(out):
            self.assertEqual(cli.main(['compare', '--baseline', 'a', '--piper', 'b']), cli.EXIT_OK)
        self.assertIn('"efficiency_gain_pct": 29.7', out.getvalue())
        compare_runs.assert_called_once_with('a', 'b')

    @mock.patch('piper.cli.checks.dyncheck')
    def test_check_suites_set_exit_code(self, dyncheck):
        """Test that a failing invariant suite exits with 1."""
        dyncheck.return_value = CheckReport('dyncheck', [CheckResult('symmetry', False, 1e-3, 1e-10, '')])
        out = io.StringIO()
        with redirect_stdout(out):
            self.assertEqual(cli.main(['dyncheck', '--states', '5']), cli.EXIT_FAILURE)
        dyncheck.assert_called_once_with(5, 0)
        self.assertIn('dyncheck: FAIL', out.getvalue())

    @mock.patch('piper.cli.checks.gradcheck')
    def test_gradcheck_pass(self, gradcheck):
        """Test that a passing suite exits with 0."""
        gradcheck.return_value = CheckReport('gradcheck', [CheckResult('proxy loss', True, 1e-7, 1e-4, '')])
        with redirect_stdout(io.StringIO()):
            self.assertEqual(cli.main(['gradcheck', '--directions', '10', '--seed', '3']), cli.EXIT_OK)
        gradcheck.assert_called_once_with(3, 10)


if __name__ == '__main__':
    unittest.main()
