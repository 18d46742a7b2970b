"""
Learning-curve rows and the sample-efficiency, precision and stability metrics.
"""
import math
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence

import numpy as np

from piper.common.errors import ContractViolation

METRICS_COLUMNS = ('step', 'success_rate', 'final_error_m', 'l_phys', 'r_energy', 'pinn_loss', 'wall_secs')
EPISODE_COLUMNS = ('step', 'episode', 'success', 'final_error_m')
METRICS_SCHEMA_VERSION = 1


class MetricsRow(NamedTuple):
    step: int
    success_rate: float
    final_error_m: float
    l_phys: Optional[float] = None
    r_energy: Optional[float] = None
    pinn_loss: Optional[float] = None
    wall_secs: float = 0.0

    def check(self) -> 'MetricsRow':
        if not 0.0 <= self.success_rate <= 1.0:
            raise ContractViolation(f"success_rate must lie in [0, 1], got {self.success_rate}")
        if not self.final_error_m >= 0.0:
            raise ContractViolation(f"final_error_m must be >= 0, got {self.final_error_m}")
        return self


class EpisodeRow(NamedTuple):
    step: int
    episode: int
    success: bool
    final_error_m: float


def steps_to_threshold(rows: Sequence[MetricsRow], threshold: float = 0.95) -> Optional[int]:
    """First evaluation step whose success rate reaches `threshold`, or None."""
    for row in sorted(rows, key=lambda r: r.step):
        if row.success_rate >= threshold:
            return int(row.step)
    return None


def final_precision(rows: Sequence[MetricsRow]) -> float:
    """Mean final distance to goal (m) at the last evaluation checkpoint."""
    if not rows:
        raise ContractViolation("no metrics rows")
    return float(max(rows, key=lambda r: r.step).final_error_m)


def stability_sigma(episodes: Sequence[EpisodeRow], window: int = 100) -> float:
    """Population standard deviation of the last `window` per-episode success indicators, in percentage points."""
    if not episodes:
        raise ContractViolation("no episode records")
    ordered = sorted(episodes, key=lambda e: (e.step, e.episode))[-window:]
    return float(np.std([1.0 if e.success else 0.0 for e in ordered]) * 100.0)


def percentage_gain(baseline: Optional[float], candidate: Optional[float]) -> Optional[float]:
    """(baseline - candidate) / baseline · 100: positive when the candidate needs less / errs less."""
    if baseline is None or candidate is None or baseline == 0:
        return None
    return (baseline - candidate) / baseline * 100.0


def _mean(values: Iterable[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None and not math.isnan(v)]
    return float(np.mean(present)) if present else None


class SeedMetrics(NamedTuple):
    seed: int
    steps_to_threshold: Optional[int]
    steps_to_fallback: Optional[int]
    final_precision_m: float
    sigma: float
    wall_secs: float


def seed_metrics(seed: int, rows: Sequence[MetricsRow], episodes: Sequence[EpisodeRow], threshold: float = 0.95,
                 fallback: float = 0.90, window: int = 100) -> SeedMetrics:
    return SeedMetrics(
        seed=seed,
        steps_to_threshold=steps_to_threshold(rows, threshold),
        steps_to_fallback=steps_to_threshold(rows, fallback),
        final_precision_m=final_precision(rows),
        sigma=stability_sigma(episodes, window) if episodes else float('nan'),
        wall_secs=float(max(rows, key=lambda r: r.step).wall_secs),
    )


def aggregate(per_seed: Sequence[SeedMetrics]) -> Dict[str, Any]:
    """Seed averages; seeds that never reach a threshold are left out of that average and counted."""
    return {
        'seeds': [m.seed for m in per_seed],
        'steps_to_threshold': _mean(m.steps_to_threshold for m in per_seed),
        'reached_threshold': sum(m.steps_to_threshold is not None for m in per_seed),
        'steps_to_fallback': _mean(m.steps_to_fallback for m in per_seed),
        'reached_fallback': sum(m.steps_to_fallback is not None for m in per_seed),
        'final_precision_m': _mean(m.final_precision_m for m in per_seed),
        'sigma': _mean(m.sigma for m in per_seed),
        'wall_secs': _mean(m.wall_secs for m in per_seed),
    }


def _rounded(value: Optional[float]) -> Optional[float]:
    return None if value is None else round(value, 1)


def gains(baseline: Dict[str, Any], piper: Dict[str, Any]) -> Dict[str, Any]:
    """
    Percentage improvements of the regularized run over the baseline, plus the
    wall-clock overhead. Raw values are kept next to their one-decimal rounding.
    """
    efficiency = percentage_gain(baseline.get('steps_to_threshold'), piper.get('steps_to_threshold'))
    efficiency_fallback = percentage_gain(baseline.get('steps_to_fallback'), piper.get('steps_to_fallback'))
    precision = percentage_gain(baseline.get('final_precision_m'), piper.get('final_precision_m'))
    stability = percentage_gain(baseline.get('sigma'), piper.get('sigma'))
    overhead = percentage_gain(baseline.get('wall_secs'), piper.get('wall_secs'))
    overhead = None if overhead is None else -overhead
    return {
        'efficiency_gain_pct': efficiency,
        'efficiency_gain_pct_rounded': _rounded(efficiency),
        'efficiency_gain_fallback_pct': efficiency_fallback,
        'precision_gain_pct': precision,
        'precision_gain_pct_rounded': _rounded(precision),
        'stability_gain_pct': stability,
        'stability_gain_pct_rounded': _rounded(stability),
        'overhead_pct': overhead,
    }


def _cell(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ''
    return repr(value) if isinstance(value, float) else str(value)


def metrics_to_records(rows: Sequence[MetricsRow]) -> List[List[str]]:
    return [[_cell(getattr(row, column)) for column in METRICS_COLUMNS] for row in rows]


def _optional_float(text: str) -> Optional[float]:
    return float(text) if text not in ('', None) else None


def metrics_from_records(records: Iterable[Dict[str, str]]) -> List[MetricsRow]:
    return [MetricsRow(step=int(r['step']), success_rate=float(r['success_rate']),
                       final_error_m=float(r['final_error_m']), l_phys=_optional_float(r['l_phys']),
                       r_energy=_optional_float(r['r_energy']), pinn_loss=_optional_float(r['pinn_loss']),
                       wall_secs=float(r['wall_secs'])) for r in records]


def episodes_from_records(records: Iterable[Dict[str, str]]) -> List[EpisodeRow]:
    return [EpisodeRow(step=int(r['step']), episode=int(r['episode']), success=r['success'] in ('1', 'True', 'true'),
                       final_error_m=float(r['final_error_m'])) for r in records]
