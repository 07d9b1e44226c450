"""Simulated composite, inversion and whole-part experiments."""

from .cfe import cfe_design, run_cfe
from .common import (C2Cache, ExperimentConfig, ExperimentError, ExperimentReport, StimulusConfig,
                     calibrate_threshold, extract)
from .fie import fie_responses, pair_means, run_fie_behavioral, run_fie_neural
from .wpe import run_wpe, shared_eye_region, two_afc

__all__ = [
    "C2Cache", "ExperimentConfig", "ExperimentError", "ExperimentReport", "StimulusConfig",
    "calibrate_threshold", "cfe_design", "extract", "fie_responses", "pair_means", "run_cfe",
    "run_fie_behavioral", "run_fie_neural", "run_wpe", "shared_eye_region", "two_afc",
]
