"""
Common utilities shared by every subpackage: logging, errors and seeded RNG streams.
"""
