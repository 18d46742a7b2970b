"""
Deterministic planar manipulation environments: reach2d, push2d and slide2d.
"""
from piper.sim.envs import (Transition, advance, final_error, observation_size, observe,  # noqa: F401
                            reset, reward, success, target_position)
from piper.sim.spec import ContactParams, EnvSpec, make_env_spec  # noqa: F401
from piper.sim.world import ContactRecord, WorldState, step  # noqa: F401
