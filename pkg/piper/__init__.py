"""
Physics-regularized policy optimization for planar manipulators.

This package bundles an analytic rigid-body dynamics engine, a deterministic
contact simulator, a small reverse-mode autodiff library, an acceleration proxy
network and PPO/SAC trainers whose actor objective carries a Lagrangian
residual penalty, plus the experiment harness that runs and compares them.
"""

__version__ = "0.3.0"
