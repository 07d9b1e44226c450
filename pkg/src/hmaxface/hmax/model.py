"""Configured HMAX pipeline: image -> C1 -> C2 for one or more template banks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import C1Params, FeatureMap, GaborParams, ModelError, c1_from_image, config_hash
from .templates import TemplateBank, c2, learn_templates

POOLING_MODES = ("neighbors", "band", "all")


@dataclass(frozen=True)
class C2Vector:
    values: np.ndarray
    bank_hash: str

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ModelConfig:
    gabor: GaborParams = field(default_factory=GaborParams)
    c1: C1Params = field(default_factory=C1Params)
    # calibrated so large templates respond ~0.77 on average to upright faces
    sigma: float = 0.12
    band: int = 7
    pooling: str = "neighbors"

    def __post_init__(self):
        self.c1.check_against(self.gabor)
        if not 1 <= self.band <= self.c1.n_bands:
            raise ModelError(f"band {self.band} outside 1..{self.c1.n_bands}")
        if self.pooling not in POOLING_MODES:
            raise ModelError(f"pooling must be one of {POOLING_MODES}")
        if self.sigma <= 0:
            raise ModelError("sigma must be positive")

    @property
    def pool_bands(self) -> tuple[int, ...]:
        if self.pooling == "band":
            return (self.band,)
        if self.pooling == "all":
            return tuple(range(1, self.c1.n_bands + 1))
        return tuple(b for b in (self.band - 1, self.band, self.band + 1) if 1 <= b <= self.c1.n_bands)

    @property
    def hash(self) -> str:
        """Hash of the S1/C1 table (sigma and pooling excluded: they do not change C1)."""
        return config_hash(self.gabor, self.c1)


class HmaxModel:
    def __init__(self, config: ModelConfig | None = None):
        self.config = config or ModelConfig()

    def c1(self, img: np.ndarray, bands=None) -> FeatureMap:
        bands = self.config.pool_bands if bands is None else bands
        return c1_from_image(img, self.config.gabor, self.config.c1, bands)

    def learn(self, train_images: list[np.ndarray], n: int, size_class: str, seed: int) -> TemplateBank:
        maps = [self.c1(img, bands=[self.config.band]) for img in train_images]
        return learn_templates(maps, n, size_class, self.config.band, seed, self.config.sigma,
                               self.config.hash)

    def check_bank(self, bank: TemplateBank) -> None:
        if bank.config_hash and bank.config_hash != self.config.hash:
            raise ModelError(f"bank {bank.hash} was learned with S1/C1 config {bank.config_hash}, "
                             f"model uses {self.config.hash}")
        if bank.band != self.config.band:
            raise ModelError(f"bank band {bank.band} != model band {self.config.band}")

    def c2(self, img: np.ndarray, bank: TemplateBank) -> C2Vector:
        self.check_bank(bank)
        return C2Vector(c2(self.c1(img), bank, self.config.pool_bands), bank.hash)

    def c2_matrix(self, images: list[np.ndarray], banks: dict[str, TemplateBank]) -> dict[str, np.ndarray]:
        """C2 responses of every image to every bank: {name: (n_images, n_templates)}.

        C1 is computed once per image and shared across banks.
        """
        for bank in banks.values():
            self.check_bank(bank)
        out = {name: np.empty((len(images), len(bank))) for name, bank in banks.items()}
        pool = self.config.pool_bands
        for i, img in enumerate(images):
            cmap = self.c1(img)
            for name, bank in banks.items():
                out[name][i] = c2(cmap, bank, pool)
        return out
