"""Trace-driven simulation of the Gaze spatial prefetcher and baselines."""

__version__ = "0.1.0"
