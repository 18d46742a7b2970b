"""
Experiment metrics, evaluation episodes and the invariant check suites.
"""
