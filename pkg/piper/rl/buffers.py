"""
Transition storage: the on-policy rollout with GAE, and the uniform replay ring.
"""
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from piper.common.errors import ContractViolation
from piper.oracle import OracleSample

DEFAULT_REPLAY_CAPACITY = 1_000_000


@dataclass(frozen=True, eq=False)
class TransitionRecord:
    """
    One environment step with the oracle terms at its start state.

    `raw` is the pre-squash action, kept so the on-policy update can re-evaluate its
    log-probability. `terminal` ends the return (never bootstrapped); `episode_end`
    also covers time-limit truncation, which is bootstrapped from `next_obs`.
    """
    obs: np.ndarray
    action: np.ndarray
    raw: np.ndarray
    log_prob: float
    reward: float
    next_obs: np.ndarray
    terminal: bool
    episode_end: bool
    qd: np.ndarray
    oracle: OracleSample


class RolloutBuffer:
    """Fixed-length on-policy batch; cleared after every update."""

    def __init__(self, length: int):
        if length < 1:
            raise ContractViolation(f"rollout length must be >= 1, got {length}")
        self.length = length
        self.records: List[TransitionRecord] = []
        self.values: List[float] = []
        self.next_values: List[float] = []

    def add(self, record: TransitionRecord, value: float, next_value: float) -> None:
        if self.full:
            raise ContractViolation("rollout is full")
        self.records.append(record)
        self.values.append(float(value))
        self.next_values.append(float(next_value))

    @property
    def full(self) -> bool:
        return len(self.records) >= self.length

    def __len__(self):
        return len(self.records)

    def clear(self) -> None:
        self.records, self.values, self.next_values = [], [], []

    def arrays(self):
        rewards = np.array([r.reward for r in self.records])
        terminals = np.array([r.terminal for r in self.records], dtype=bool)
        ends = np.array([r.episode_end for r in self.records], dtype=bool)
        return rewards, np.array(self.values), np.array(self.next_values), terminals, ends


def gae_advantages(rollout: RolloutBuffer, gamma: float, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Generalized advantage estimates and λ-returns.

    δ_t = r_t + γ·(1 - terminal_t)·V(s_{t+1}) - V(s_t); the recursion restarts at
    every episode end, and truncated episodes bootstrap from V of their last next state.
    """
    rewards, values, next_values, terminals, ends = rollout.arrays()
    advantages = np.zeros_like(rewards)
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        delta = rewards[t] + gamma * (0.0 if terminals[t] else next_values[t]) - values[t]
        if ends[t]:
            running = 0.0
        running = delta + gamma * lam * running
        advantages[t] = running
    return advantages, advantages + values


class ReplayBuffer:
    """FIFO ring of TransitionRecords; sampling is uniform with replacement and seeded."""

    def __init__(self, capacity: int = DEFAULT_REPLAY_CAPACITY):
        if capacity < 1:
            raise ContractViolation(f"replay capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: List[Optional[TransitionRecord]] = []
        self._next = 0

    def add(self, record: TransitionRecord) -> None:
        if len(self._items) < self.capacity:
            self._items.append(record)
        else:
            self._items[self._next] = record
        self._next = (self._next + 1) % self.capacity

    def __len__(self):
        return len(self._items)

    def sample(self, rng: np.random.Generator, size: int) -> List[TransitionRecord]:
        if not self._items:
            raise ContractViolation("cannot sample from an empty replay buffer")
        indices = rng.integers(0, len(self._items), size=size)
        return [self._items[i] for i in indices]

    def records(self) -> List[TransitionRecord]:
        """Stored records from oldest to newest."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._next:] + self._items[:self._next]
