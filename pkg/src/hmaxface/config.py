"""Run configuration: the shipped TOML defaults, user overrides, validation."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import tomli

from .experiments.common import ExperimentConfig, ExperimentError, StimulusConfig
from .hmax.layers import C1Params, GaborParams, ModelError
from .hmax.model import ModelConfig
from .hmax.templates import SIZE_CLASSES
from .stimulus.synthetic import FaceStyle
from .stimulus.transforms import StimulusError

CONFIG_FORMAT_VERSION = 1


class ConfigError(ValueError):
    pass


def default_config_text() -> str:
    return resources.files("hmaxface").joinpath("default_config.toml").read_text()


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        path = f"{where}.{key}" if where else key
        if key not in base:
            raise ConfigError(f"unknown config key '{path}'")
        if isinstance(base[key], dict) and key != "coverage_subsets":
            if not isinstance(val, dict):
                raise ConfigError(f"config key '{path}' must be a table")
            out[key] = _merge(base[key], val, path)
        else:
            out[key] = val
    return out


@dataclass(frozen=True)
class SyntheticConfig:
    count: int = 100
    canvas: tuple[int, int] = (272, 272)
    style: FaceStyle = field(default_factory=FaceStyle)


@dataclass(frozen=True)
class RunConfig:
    seed: int
    faces_dir: str
    eye_regions: str
    out_dir: str
    synthetic: SyntheticConfig
    stimulus: StimulusConfig
    model: ModelConfig
    n_templates: int
    experiments: ExperimentConfig
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    def as_dict(self) -> dict:
        return self.raw

    @property
    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()[:16]


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the TOML file at `path`, then `overrides` (same nesting as the file)."""
    raw = tomli.loads(default_config_text())
    if path is not None:
        try:
            user = tomli.loads(Path(path).read_text())
        except (OSError, tomli.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        raw = _merge(raw, user)
    if overrides:
        raw = _merge(raw, overrides)
    return build_config(raw)


def build_config(raw: dict) -> RunConfig:
    if raw.get("format_version") != CONFIG_FORMAT_VERSION:
        raise ConfigError(f"config format_version {raw.get('format_version')!r}; "
                          f"expected {CONFIG_FORMAT_VERSION}")
    try:
        syn = raw["synthetic"]
        style = FaceStyle(**{k: float(syn[k]) for k in ("eyes", "brows", "nose", "mouth", "shading",
                                                        "blur", "noise")})
        synthetic = SyntheticConfig(int(syn["count"]), (int(syn["height"]), int(syn["width"])), style)
        st = dict(raw["stimulus"])
        st["misalign_px"] = int(st["misalign_px"]) or None
        st["eye_region_frac"] = tuple(float(v) for v in st["eye_region_frac"])
        if len(st["eye_region_frac"]) != 4:
            raise ConfigError("stimulus.eye_region_frac needs 4 values")
        stim = StimulusConfig(**st)
        _check_stimulus(stim)
        m = raw["model"]
        g = dict(m["gabor"])
        g["orientations"] = tuple(float(np.deg2rad(d)) for d in g.pop("orientations_deg"))
        gabor = GaborParams(**{k: tuple(v) if isinstance(v, list) else v for k, v in g.items()})
        c = m["c1"]
        c1 = C1Params(tuple(c["windows"]), tuple(c["strides"]), tuple(tuple(s) for s in c["scales"]))
        model = ModelConfig(gabor, c1, float(m["sigma"]), int(m["band"]), str(m["pooling"]))
        sizes = tuple(m["sizes"])
        bad = [s for s in sizes if s not in SIZE_CLASSES]
        if bad or not sizes:
            raise ConfigError(f"model.sizes must be a non-empty subset of {sorted(SIZE_CLASSES)}")
        n_templates = int(m["n_templates"])
        if n_templates < 1:
            raise ConfigError("model.n_templates must be >= 1")
        e = dict(raw["experiments"])
        e["response_band"] = tuple(float(v) for v in e["response_band"])
        e["coverage_subsets"] = {k: int(v) for k, v in e["coverage_subsets"].items()}
        exp = ExperimentConfig(sizes=sizes, seed=int(raw["seed"]), **e)
        if synthetic.count < 2:
            raise ConfigError("synthetic.count must be >= 2")
        paths = raw["paths"]
        return RunConfig(int(raw["seed"]), str(paths["faces_dir"]), str(paths["eye_regions"]),
                         str(paths["out_dir"]), synthetic, stim, model, n_templates, exp, raw)
    except (ModelError, ExperimentError, StimulusError, TypeError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    except KeyError as exc:
        raise ConfigError(f"config lacks key {exc}") from None


def _check_stimulus(s: StimulusConfig) -> None:
    if not 0 < s.scale <= 1:
        raise ConfigError("stimulus.scale must be in (0, 1]")
    if not (0 < s.oval_width_frac <= 0.5 and 0 < s.oval_height_frac <= 0.5):
        raise ConfigError("oval fractions must be in (0, 0.5]")
    if s.target_var <= 0:
        raise ConfigError("stimulus.target_var must be positive")
    for name in ("cfe_attenuation", "wpe_attenuation"):
        if not 0 <= getattr(s, name) <= 1:
            raise ConfigError(f"stimulus.{name} must be in [0, 1]")
    if min(s.gap_px, s.feather_px, s.margin_px) < 0:
        raise ConfigError("gap, feather and margin must be >= 0")
    top, left, bottom, right = s.eye_region_frac
    if not (0 <= top < bottom <= 1 and 0 <= left < right <= 1):
        raise ConfigError("stimulus.eye_region_frac must be 0 <= top < bottom <= 1, 0 <= left < right <= 1")


def config_summary(cfg: RunConfig) -> dict:
    """Plain-data echo of the resolved configuration for reports."""
    return {"raw": cfg.raw, "digest": cfg.digest, "model_hash": cfg.model.hash,
            "stimulus": asdict(cfg.stimulus), "experiments": asdict(cfg.experiments)}
