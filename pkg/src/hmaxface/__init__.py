"""Tuning-size HMAX model and holistic face-processing experiments."""

__version__ = "0.1.0"
