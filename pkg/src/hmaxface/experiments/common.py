"""Shared experiment plumbing: configs, reports, threshold calibration, C2 extraction."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Protocol

import numpy as np

from ..hmax.model import HmaxModel
from ..hmax.templates import TemplateBank
from ..stats import RNG_ALGORITHM, BootstrapResult
from ..stimulus.transforms import OvalMask

EXPERIMENT_KEYS = {"cfe": 1, "fie": 2, "fie-neural": 3, "wpe": 4}


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class StimulusConfig:
    scale: float = 0.75
    oval_width_frac: float = 0.38
    oval_height_frac: float = 0.48
    target_mean: float = 0.5
    target_var: float = 0.02
    gap_px: int = 2
    # None: half the face-oval width
    misalign_px: int | None = None
    cfe_attenuation: float = 0.1
    wpe_attenuation: float = 0.5
    # "multiply": attenuation scales raw pixel values; "contrast": it scales deviations from the background
    attenuation_mode: str = "contrast"
    feather_px: int = 2
    margin_px: int = 16
    # (top, left, bottom, right) fractions of the face image, used when faces carry no eye region
    eye_region_frac: tuple[float, float, float, float] = (0.28, 0.18, 0.50, 0.82)

    def __post_init__(self):
        if self.attenuation_mode not in ("multiply", "contrast"):
            raise ExperimentError("attenuation_mode must be 'multiply' or 'contrast'")

    @property
    def background(self) -> float:
        return self.target_mean

    @property
    def pivot(self) -> float:
        return self.background if self.attenuation_mode == "contrast" else 0.0

    def oval(self, shape: tuple[int, int]) -> OvalMask:
        return OvalMask.default(shape, self.background, self.oval_width_frac, self.oval_height_frac)

    def misalignment(self, shape: tuple[int, int]) -> int:
        if self.misalign_px is not None:
            return int(self.misalign_px)
        return int(round(self.oval(shape).half_width))


@dataclass(frozen=True)
class ExperimentConfig:
    cfe_faces: int = 20
    wpe_faces: int = 20
    fie_faces: int = 50
    sizes: tuple[str, ...] = ("large", "medium", "small")
    cfe_boot_runs: int = 1000
    wpe_boot_runs: int = 1000
    fie_boot_runs: int = 10000
    coverage_subsets: dict = field(default_factory=lambda: {"large": 100, "medium": 150})
    response_band: tuple[float, float] = (0.75, 0.80)
    target_hit_rate: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if min(self.cfe_faces, self.wpe_faces, self.fie_faces) < 2:
            raise ExperimentError("face counts must be >= 2")
        lo, hi = self.response_band
        if not lo < hi:
            raise ExperimentError("response band lower bound must be below the upper bound")
        if not 0 < self.target_hit_rate < 1:
            raise ExperimentError("target hit rate must be in (0, 1)")
        if min(self.cfe_boot_runs, self.wpe_boot_runs, self.fie_boot_runs) < 1:
            raise ExperimentError("bootstrap run counts must be >= 1")


def config_digest(*objs) -> str:
    blob = json.dumps([asdict(o) if hasattr(o, "__dataclass_fields__") else o for o in objs],
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ExperimentReport:
    """Statistics of one experiment run plus its raw trial table."""

    experiment: str
    rows: list[dict] = field(default_factory=list)
    trials: list[dict] = field(default_factory=list)
    trial_columns: tuple[str, ...] = ()
    extra: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    rng: str = RNG_ALGORITHM

    def add(self, size: str, orientation: str, condition: str, mean: float, sem: float | None = None,
            p: float | None = None, p_kind: str = "", n: int | None = None, test: str = "",
            **extra) -> dict:
        if p is not None and not 0 <= p <= 1:
            raise ExperimentError(f"p-value {p} outside [0, 1]")
        if sem is not None and sem < 0:
            raise ExperimentError("negative SEM")
        row = {"experiment": self.experiment, "size": size, "orientation": orientation,
               "condition": condition, "mean": float(mean),
               "sem": None if sem is None else float(sem),
               "p": None if p is None else float(p), "p_kind": p_kind,
               "n": n, "test": test}
        row.update(extra)
        self.rows.append(row)
        return row

    def add_boot(self, size: str, orientation: str, condition: str, res: BootstrapResult, n: int,
                 two_sided: bool = False, **extra) -> dict:
        p = res.p_two_sided if two_sided else res.p_one_sided
        kind = "bootstrap-two-sided" if two_sided else f"bootstrap-one-sided-{res.direction}"
        return self.add(size, orientation, condition, res.estimate, res.sem, p, kind, n,
                        test=f"bootstrap[{res.n_runs}]", p_floored=res.p_floored,
                        p_two_sided=res.p_two_sided, **extra)

    def find(self, size: str | None = None, orientation: str | None = None,
             condition: str | None = None) -> dict:
        hits = [r for r in self.rows
                if (size is None or r["size"] == size)
                and (orientation is None or r["orientation"] == orientation)
                and (condition is None or r["condition"] == condition)]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {size}/{orientation}/{condition} in {self.experiment}")
        return hits[0]

    def as_dict(self) -> dict:
        return {"experiment": self.experiment, "rows": self.rows, "extra": self.extra,
                "config": self.config, "seeds": self.seeds, "rng": self.rng,
                "n_trials": len(self.trials), "trial_columns": list(self.trial_columns)}


def calibrate_threshold(dissims, target: float = 0.75) -> float:
    """Threshold whose "same" rate, #(d < threshold) / N, is closest to `target`.

    Candidates are every distinct value (just above it) plus just below the
    minimum; ties go to the smaller threshold.
    """
    d = np.sort(np.asarray(dissims, dtype=np.float64))
    if d.size == 0:
        raise ExperimentError("cannot calibrate a threshold on no trials")
    if not 0 < target < 1:
        raise ExperimentError("target must be in (0, 1)")
    values = np.unique(d)
    # "just above v" hits every d <= v
    cands = np.concatenate([[values[0]], np.nextafter(values, np.inf)])
    rates = np.array([np.mean(d < c) for c in cands])
    err = np.abs(rates - target)
    best = np.flatnonzero(err <= err.min() + 1e-12)
    return float(cands[best].min())


class C2Cache(Protocol):
    def get(self, bank_hash: str, image: np.ndarray) -> np.ndarray | None: ...
    def put(self, bank_hash: str, image: np.ndarray, values: np.ndarray) -> np.ndarray: ...


def extract(model: HmaxModel, images: list[np.ndarray], banks: dict[str, TemplateBank],
            cache: C2Cache | None = None) -> dict[str, np.ndarray]:
    """C2 matrices {size: (n_images, n_templates)}, reusing cached rows when available.

    With a cache, every row is the value the cache stores (``put`` returns it),
    so cached and freshly computed rows are interchangeable.
    """
    if cache is None:
        return model.c2_matrix(images, banks)
    out = {name: np.empty((len(images), len(b))) for name, b in banks.items()}
    for i, img in enumerate(images):
        todo = {}
        for name, bank in banks.items():
            hit = cache.get(bank.hash, img)
            if hit is None:
                todo[name] = bank
            else:
                out[name][i] = hit
        if todo:
            fresh = model.c2_matrix([img], todo)
            for name, vals in fresh.items():
                out[name][i] = cache.put(banks[name].hash, img, vals[0])
    return out
