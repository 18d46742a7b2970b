"""
Seeded, splittable random streams.

Every seed fans out into independent PCG64 generators, one per consumer, so that
adding draws in one component never shifts the draws of another.
"""
from typing import NamedTuple

import numpy as np

STREAM_NAMES = ('env', 'policy_init', 'critic_init', 'pinn_init', 'exploration',
                'sampling', 'pinn_sampling', 'penalty', 'evaluation')


class RngStreams(NamedTuple):
    env: np.random.Generator
    policy_init: np.random.Generator
    critic_init: np.random.Generator
    pinn_init: np.random.Generator
    exploration: np.random.Generator
    sampling: np.random.Generator
    pinn_sampling: np.random.Generator
    penalty: np.random.Generator
    evaluation: np.random.Generator


def make_streams(seed: int) -> RngStreams:
    """Split one 64-bit seed into the named component streams."""
    children = np.random.SeedSequence(int(seed)).spawn(len(STREAM_NAMES))
    return RngStreams(*(np.random.Generator(np.random.PCG64(child)) for child in children))


def generator(seed: int) -> np.random.Generator:
    """A single PCG64 generator for one-off seeded draws (episode resets, tests)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
