"""Glue from raw faces to experiment reports."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..hmax.model import HmaxModel
from ..hmax.templates import TemplateBank
from ..stats import derive_seed
from ..stimulus.transforms import Region, preprocess, split_train_test
from .cfe import run_cfe
from .common import C2Cache, ExperimentConfig, ExperimentError, ExperimentReport, StimulusConfig
from .fie import fie_responses, run_fie_behavioral, run_fie_neural
from .wpe import run_wpe

EXPERIMENTS = ("cfe", "fie", "fie-neural", "wpe")
SIZE_KEYS = {"small": 1, "medium": 2, "large": 3}


@dataclass
class FaceSet:
    """Preprocessed faces split into training and test halves, with optional eye regions."""

    train: list[np.ndarray]
    test: list[np.ndarray]
    test_regions: list[Region] | None = None


def prepare_faces(raw: list[np.ndarray], stim: StimulusConfig,
                  regions: list[Region | None] | None = None) -> FaceSet:
    """Preprocess every face and split odd/even positions into train/test."""
    if len(raw) < 2:
        raise ExperimentError("need at least 2 faces")
    faces = []
    for img in raw:
        shape = (int(round(img.shape[0] * stim.scale)), int(round(img.shape[1] * stim.scale)))
        faces.append(preprocess(img, stim.scale, stim.oval(shape), stim.target_mean, stim.target_var))
    train, test = split_train_test(faces)
    test_regions = None
    if regions is not None and all(r is not None for r in regions):
        scaled = [r.scaled(stim.scale) for r in regions]
        test_regions = split_train_test(scaled)[1]
    return FaceSet(train, test, test_regions)


def learn_banks(model: HmaxModel, train: list[np.ndarray], sizes, n_templates: int,
                seed: int) -> dict[str, TemplateBank]:
    """One template bank per size class, each from its own random stream."""
    return {s: model.learn(train, n_templates, s, derive_seed(seed, 0, SIZE_KEYS[s])) for s in sizes}


def run_experiments(names, banks: dict[str, TemplateBank], faces: FaceSet, cfg: ExperimentConfig,
                    model: HmaxModel, stim: StimulusConfig,
                    cache: C2Cache | None = None) -> dict[str, ExperimentReport]:
    unknown = [n for n in names if n not in EXPERIMENTS]
    if unknown:
        raise ExperimentError(f"unknown experiment(s) {unknown}; choose from {EXPERIMENTS}")
    out = {}
    fie_resp = None
    for name in names:
        if name == "cfe":
            out[name] = run_cfe(banks, faces.test, cfg, model, stim, cache)
        elif name in ("fie", "fie-neural"):
            if fie_resp is None:
                fie_resp = fie_responses(banks, faces.test, cfg.fie_faces, cfg.sizes, model, stim, cache)
            runner = run_fie_behavioral if name == "fie" else run_fie_neural
            out[name] = runner(banks, faces.test, cfg, model, stim, cache, responses=fie_resp)
        else:
            out[name] = run_wpe(banks, faces.test, cfg, faces.test_regions, model, stim, cache)
    return out
