"""Integration Tests

Integration tests run several services together on synthetic data written to tmp_path.
"""
