import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional

from piper.common.errors import ContractViolation, PiperError
from piper.common.rng import generator
from piper.config import ExperimentConfig, build_env_spec, config_from_dict
from piper.harness import metrics
from piper.harness.evaluation import evaluate_policy
from piper.rl.trainer import SeedResult, policy_from_checkpoint, train_seed
from piper.state import run_store

_SEED_RANGE = 2 ** 31


def _failed_result(seed: int, error: Exception) -> SeedResult:
    return SeedResult(seed, [], [], [], {}, failed=True, error=str(error),
                      diagnostics={'error': str(error), 'type': type(error).__name__})


def _run_seeds(config: ExperimentConfig) -> List[SeedResult]:
    """
    Train every seed, sequentially or in a process pool.

    A PiperError inside one seed is recorded as a failed seed; the other seeds still run.
    """
    results = []
    if config.workers == 1 or len(config.seeds) == 1:
        for seed in config.seeds:
            try:
                results.append(train_seed(config, seed))
            except PiperError as e:
                logging.error(f"Seed {seed} failed: {e}", exc_info=True)
                results.append(_failed_result(seed, e))
        return results

    workers = min(config.workers, len(config.seeds))
    logging.info(f"Running {len(config.seeds)} seeds on {workers} worker processes")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {seed: pool.submit(train_seed, config, seed) for seed in config.seeds}
        for seed, future in futures.items():
            try:
                results.append(future.result())
            except PiperError as e:
                logging.error(f"Seed {seed} failed: {e}", exc_info=True)
                results.append(_failed_result(seed, e))
    return results


def _seed_summary(config: ExperimentConfig, result: SeedResult) -> Optional[metrics.SeedMetrics]:
    if result.failed or not result.rows:
        return None
    return metrics.seed_metrics(result.seed, result.rows, result.episodes, config.success_threshold,
                                config.fallback_threshold, config.sigma_window)


def summarize(config: ExperimentConfig, results: List[SeedResult]) -> Dict[str, Any]:
    """
    Build the summary document of a run.

    Failed seeds are listed but excluded from the aggregates.
    """
    per_seed = []
    for result in results:
        seed_summary = _seed_summary(config, result)
        if seed_summary is not None:
            per_seed.append(seed_summary)
    constraints = {
        str(result.seed): result.constraints for result in results if result.constraints
    }
    return {
        'env_id': config.env_id,
        'algorithm': config.algorithm,
        'piper_enabled': config.piper_enabled,
        'lambda_phys': config.lambda_phys,
        'success_threshold': config.success_threshold,
        'fallback_threshold': config.fallback_threshold,
        'per_seed': [m._asdict() for m in per_seed],
        'aggregate': metrics.aggregate(per_seed) if per_seed else None,
        'failed_seeds': [{'seed': r.seed, 'error': r.error} for r in results if r.failed],
        'constraints': constraints,
    }


def run_experiment(config: ExperimentConfig, root: Optional[str] = None) -> str:
    """
    Train and evaluate every seed of an experiment and write the run directory.

    Args:
        config: Validated experiment configuration
        root: Optional run-directory root (default: PIPER_RUN_ROOT or ./runs)

    Returns:
        str: Path of the run directory
    """
    label = f"{config.env_id}-{config.algorithm}-{'piper' if config.piper_enabled else 'baseline'}"
    run_dir = run_store.new_run_dir(label, config.run_name, root)
    run_store.write_config(run_dir, config.to_dict())
    logging.info(f"Starting experiment {label} with seeds {list(config.seeds)}")

    results = _run_seeds(config)
    for result in results:
        if result.checkpoint:
            run_store.write_seed_artifacts(run_dir, result)
        if result.failed:
            logging.warning(f"Seed {result.seed} recorded as failed: {result.error}")

    summary = summarize(config, results)
    run_store.write_summary(run_dir, summary)
    aggregate = summary['aggregate']
    if aggregate is not None:
        logging.info(f"Experiment {label} done: final precision {aggregate['final_precision_m']}, "
                     f"steps to threshold {aggregate['steps_to_threshold']}, sigma {aggregate['sigma']}")
    else:
        logging.warning(f"Experiment {label} produced no successful seeds")
    return run_dir


def evaluate_checkpoint(path: str, episodes: int, seed: int) -> Dict[str, float]:
    """
    Reload a policy checkpoint and run deterministic evaluation episodes.

    Args:
        path: checkpoint.json or a seed directory holding one
        episodes: Number of episodes
        seed: Seed drawing the episode resets

    Returns:
        dict: success_rate, final_error_m and sigma (percentage points)
    """
    if episodes < 1:
        raise ContractViolation(f"episodes must be >= 1, got {episodes}")
    document = run_store.load_checkpoint(path)
    config = config_from_dict(document['config'])
    spec = build_env_spec(config)
    policy = policy_from_checkpoint(document)
    episode_seeds = generator(seed).integers(0, _SEED_RANGE, size=episodes)
    result = evaluate_policy(spec, policy, episode_seeds, int(document.get('step', 0)),
                             config.weights)
    report = {
        'success_rate': result.success_rate,
        'final_error_m': result.mean_final_error,
        'sigma': metrics.stability_sigma(result.episodes, window=episodes),
        'constraint': result.constraint,
        'episodes': episodes,
    }
    logging.info(f"Evaluated {path}: {report}")
    return report


def _failed_seeds(run_dir: str) -> List[int]:
    path = os.path.join(run_dir, run_store.SUMMARY_FILE)
    if not os.path.exists(path):
        return []
    return [entry['seed'] for entry in run_store.read_json(path).get('failed_seeds', [])]


def _run_aggregate(run_dir: str, config: ExperimentConfig) -> Dict[str, Any]:
    """Seed-averaged metrics recomputed from the per-seed CSV files, leaving out failed seeds."""
    per_seed = []
    failed = _failed_seeds(run_dir)
    for seed, directory in run_store.seed_dirs(run_dir).items():
        if seed in failed:
            logging.info(f"Skipping failed seed {seed} in {run_dir}")
            continue
        rows = run_store.read_metrics(directory)
        if not rows:
            logging.warning(f"No metrics rows for seed {seed} in {run_dir}")
            continue
        per_seed.append(metrics.seed_metrics(seed, rows, run_store.read_episodes(directory),
                                             config.success_threshold, config.fallback_threshold,
                                             config.sigma_window))
    if not per_seed:
        raise ContractViolation(f"no usable seeds in {run_dir}")
    return metrics.aggregate(per_seed)


def _stored_config(run_dir: str) -> ExperimentConfig:
    path = os.path.join(run_dir, run_store.CONFIG_FILE)
    if os.path.exists(path):
        return config_from_dict(run_store.read_json(path))
    return ExperimentConfig()


def compare_runs(baseline_dir: str, piper_dir: str) -> Dict[str, Any]:
    """
    Percentage gains of a regularized run over its baseline, from their raw CSVs.

    Args:
        baseline_dir: Run directory of the baseline
        piper_dir: Run directory of the regularized run

    Returns:
        dict: baseline and piper aggregates plus the gain figures
    """
    baseline = _run_aggregate(baseline_dir, _stored_config(baseline_dir))
    candidate = _run_aggregate(piper_dir, _stored_config(piper_dir))
    report = {'baseline': baseline, 'piper': candidate, 'gains': metrics.gains(baseline, candidate)}
    logging.info(f"Comparison {baseline_dir} vs {piper_dir}: {report['gains']}")
    return report

