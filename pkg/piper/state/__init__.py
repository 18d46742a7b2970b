"""
Run-directory persistence for metrics, episodes, checkpoints and summaries.
"""
