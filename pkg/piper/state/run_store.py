import csv
import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence

from retry import retry

from piper.harness.metrics import (EPISODE_COLUMNS, METRICS_COLUMNS, METRICS_SCHEMA_VERSION, EpisodeRow, MetricsRow,
                                   episodes_from_records, metrics_from_records, metrics_to_records)

DEFAULT_RUN_ROOT = 'runs'
METRICS_FILE = 'metrics.csv'
EPISODES_FILE = 'episodes.csv'
SUMMARY_FILE = 'summary.json'
CHECKPOINT_FILE = 'checkpoint.json'
DIAGNOSTICS_FILE = 'diagnostics.json'
CONFIG_FILE = 'config.json'


def run_root() -> str:
    """Directory holding every run, from PIPER_RUN_ROOT (default ./runs)."""
    return os.environ.get('PIPER_RUN_ROOT') or DEFAULT_RUN_ROOT


def new_run_dir(config_name: str, run_name: Optional[str] = None, root: Optional[str] = None) -> str:
    """
    Create the directory for a new run.

    Args:
        config_name: Short label used when no run_name is given (env and algorithm)
        run_name: Optional explicit directory name
        root: Optional root override (default: run_root())

    Returns:
        str: Path of the created directory
    """
    name = run_name or f"{config_name}-{datetime.now().strftime('%Y%m%d-%H%M%S')}"
    path = os.path.join(root or run_root(), name)
    os.makedirs(path, exist_ok=True)
    logging.info(f"Run directory: {path}")
    return path


def seed_dir(run_dir: str, seed: int) -> str:
    path = os.path.join(run_dir, f"seed_{seed}")
    os.makedirs(path, exist_ok=True)
    return path


@retry(OSError, tries=3, delay=0.5)
def write_json(path: str, document: Dict[str, Any]) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, 'w', encoding='utf-8') as fh:
        json.dump(document, fh, indent=2, sort_keys=True, allow_nan=False, default=_json_default)
    os.replace(tmp, path)


def _json_default(value):
    # numpy scalars and arrays
    if hasattr(value, 'tolist'):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def read_json(path: str) -> Dict[str, Any]:
    with open(path, 'r', encoding='utf-8') as fh:
        return json.load(fh)


@retry(OSError, tries=3, delay=0.5)
def _write_csv(path: str, columns: Sequence[str], records: List[List[str]]) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, 'w', encoding='utf-8', newline='') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(columns)
        writer.writerows(records)
    os.replace(tmp, path)


def write_metrics(directory: str, rows: Sequence[MetricsRow]) -> str:
    """Write metrics.csv with rows sorted by step."""
    path = os.path.join(directory, METRICS_FILE)
    _write_csv(path, METRICS_COLUMNS, metrics_to_records(sorted(rows, key=lambda r: r.step)))
    return path


def write_episodes(directory: str, episodes: Sequence[EpisodeRow]) -> str:
    path = os.path.join(directory, EPISODES_FILE)
    records = [[str(e.step), str(e.episode), '1' if e.success else '0', repr(float(e.final_error_m))]
               for e in sorted(episodes, key=lambda e: (e.step, e.episode))]
    _write_csv(path, EPISODE_COLUMNS, records)
    return path


def read_metrics(directory: str) -> List[MetricsRow]:
    with open(os.path.join(directory, METRICS_FILE), 'r', encoding='utf-8', newline='') as fh:
        return metrics_from_records(csv.DictReader(fh))


def read_episodes(directory: str) -> List[EpisodeRow]:
    path = os.path.join(directory, EPISODES_FILE)
    if not os.path.exists(path):
        return []
    with open(path, 'r', encoding='utf-8', newline='') as fh:
        return episodes_from_records(csv.DictReader(fh))


def write_seed_artifacts(run_dir: str, result) -> str:
    """
    Persist one seed's metrics, episodes, checkpoint and, for failed seeds, diagnostics.

    Args:
        run_dir: Run directory
        result: SeedResult from the trainer

    Returns:
        str: The seed directory
    """
    directory = seed_dir(run_dir, result.seed)
    write_metrics(directory, result.rows)
    write_episodes(directory, result.episodes)
    write_json(os.path.join(directory, CHECKPOINT_FILE), result.checkpoint)
    if result.failed:
        write_json(os.path.join(directory, DIAGNOSTICS_FILE), _finite(result.diagnostics))
    logging.info(f"Wrote artifacts for seed {result.seed} to {directory}")
    return directory


def write_summary(run_dir: str, summary: Dict[str, Any]) -> str:
    path = os.path.join(run_dir, SUMMARY_FILE)
    write_json(path, _finite({'schema_version': METRICS_SCHEMA_VERSION, **summary}))
    logging.info(f"Wrote summary to {path}")
    return path


def write_config(run_dir: str, config_document: Dict[str, Any]) -> str:
    path = os.path.join(run_dir, CONFIG_FILE)
    write_json(path, config_document)
    return path


def _finite(document):
    """Replace NaN/inf floats by None so the JSON stays strict."""
    if isinstance(document, dict):
        return {key: _finite(value) for key, value in document.items()}
    if isinstance(document, (list, tuple)):
        return [_finite(value) for value in document]
    if isinstance(document, float) and (document != document or document in (float('inf'), float('-inf'))):
        return None
    return document


def seed_dirs(run_dir: str) -> Dict[int, str]:
    """Seed directories of a run, keyed by seed."""
    found = {}
    for name in sorted(os.listdir(run_dir)):
        path = os.path.join(run_dir, name)
        if name.startswith('seed_') and os.path.isdir(path):
            try:
                found[int(name[len('seed_'):])] = path
            except ValueError:
                logging.warning(f"Ignoring unexpected directory {path}")
    return found


def load_checkpoint(path: str) -> Dict[str, Any]:
    """Load checkpoint.json from a file path or a seed directory."""
    if os.path.isdir(path):
        path = os.path.join(path, CHECKPOINT_FILE)
    return read_json(path)
