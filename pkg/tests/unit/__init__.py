"""Unit Tests

Unit tests exercise one kernel, layer or service function in isolation.
They are fast, deterministic and touch no files beyond tmp_path.
"""
