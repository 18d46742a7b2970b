"""
Unit tests for piper.
"""