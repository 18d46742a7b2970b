"""
Actor-critic trainers (PPO and SAC) with the physics penalty on the actor.
"""
