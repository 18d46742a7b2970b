"""
Command-line entry point: train, eval, compare, dyncheck and gradcheck.
"""
import argparse
import json
import logging
import sys
from typing import List, Optional

from piper import main as runner
from piper.common.errors import ConfigError, PiperError
from piper.common.logger import setup_logging
from piper.config import load_config
from piper.harness import checks

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='piper', description='Physics-informed policy optimization on planar arms.')
    parser.add_argument('--log-level', type=str, default=None, help='Log level (default: PIPER_LOG_LEVEL or INFO)')
    commands = parser.add_subparsers(dest='command', required=True)

    train = commands.add_parser('train', help='Train every seed of an experiment config.')
    train.add_argument('--config', type=str, required=False, help='Path to an experiment JSON config.')
    train.add_argument('--run-root', type=str, default=None, help='Run directory root (default: PIPER_RUN_ROOT).')
    train.add_argument('--run-name', type=str, default=None, help='Name of the run directory.')
    train.add_argument('--seeds', type=int, nargs='+', default=None, help='Override the seed list.')
    train.add_argument('--total-steps', type=int, default=None, help='Override the step budget per seed.')
    train.add_argument('--workers', type=int, default=None, help='Seeds trained in parallel.')
    train.add_argument('--no-piper', action='store_true', help='Train the unregularized baseline.')

    evaluate = commands.add_parser('eval', help='Evaluate a saved policy checkpoint.')
    evaluate.add_argument('--checkpoint', type=str, required=True, help='checkpoint.json or its seed directory.')
    evaluate.add_argument('--episodes', type=int, default=100, help='Number of evaluation episodes.')
    evaluate.add_argument('--seed', type=int, default=0, help='Seed of the episode resets.')

    compare = commands.add_parser('compare', help='Gains of a regularized run over its baseline.')
    compare.add_argument('--baseline', type=str, required=True, help='Baseline run directory.')
    compare.add_argument('--piper', type=str, required=True, help='Regularized run directory.')

    dyn = commands.add_parser('dyncheck', help='Run the dynamics invariant suite.')
    dyn.add_argument('--states', type=int, default=1000, help='Random states per chain.')
    dyn.add_argument('--seed', type=int, default=0)

    grad = commands.add_parser('gradcheck', help='Check every loss gradient against finite differences.')
    grad.add_argument('--directions', type=int, default=100, help='Random directions per loss.')
    grad.add_argument('--seed', type=int, default=0)
    return parser


def _overrides(args) -> dict:
    overrides = {}
    if args.run_name:
        overrides['run_name'] = args.run_name
    if args.seeds:
        overrides['seeds'] = args.seeds
    if args.total_steps is not None:
        overrides['total_steps'] = args.total_steps
    if args.workers is not None:
        overrides['workers'] = args.workers
    if args.no_piper:
        overrides['piper_enabled'] = False
    return overrides


def _print(document) -> None:
    print(json.dumps(document, indent=2, sort_keys=True, default=str))


def _report(report) -> int:
    for line in report.lines():
        print(line)
    print(f"{report.suite}: {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_FAILURE


def run(args) -> int:
    if args.command == 'train':
        config = load_config(args.config, _overrides(args))
        run_dir = runner.run_experiment(config, args.run_root)
        print(run_dir)
        return EXIT_OK
    if args.command == 'eval':
        _print(runner.evaluate_checkpoint(args.checkpoint, args.episodes, args.seed))
        return EXIT_OK
    if args.command == 'compare':
        _print(runner.compare_runs(args.baseline, args.piper))
        return EXIT_OK
    if args.command == 'dyncheck':
        return _report(checks.dyncheck(args.states, args.seed))
    if args.command == 'gradcheck':
        return _report(checks.gradcheck(args.seed, args.directions))
    raise ValueError(f"Unsupported command: {args.command}")


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run the command and map errors to exit codes.

    Returns:
        int: 0 on success, 2 for configuration errors, 1 for any other failure
    """
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return run(args)
    except ConfigError as e:
        for problem in e.problems:
            logging.error(f"config: {problem}")
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    except PiperError as e:
        logging.error(f"{args.command} failed: {e}", exc_info=True)
        print(str(e), file=sys.stderr)
        return EXIT_FAILURE
    except OSError as e:
        logging.error(f"{args.command} failed: {e}")
        print(str(e), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
