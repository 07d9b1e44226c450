"""Template learning (C1 snapshots) and S2/C2 template matching."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .layers import FeatureMap, ModelError

SIZE_CLASSES = {"small": 4, "medium": 8, "large": 12}


@dataclass(frozen=True)
class Template:
    """One S2/C2 unit: a k x k x n_orientations snapshot of C1 activity."""

    size_class: str
    patch: np.ndarray
    scale_band: int
    source: tuple[int, int, int]  # (training image index, row, col)
    id: int

    @property
    def k(self) -> int:
        return self.patch.shape[0]


@dataclass
class TemplateBank:
    """A list of same-size templates packed into one (n, k, k, n_orient) array."""

    size_class: str
    band: int
    patches: np.ndarray
    sources: np.ndarray  # (n, 3) int
    sigma: float
    config_hash: str = ""
    _hash: str = field(default="", repr=False)

    def __post_init__(self):
        self.patches = np.ascontiguousarray(self.patches, dtype=np.float64)
        self.sources = np.asarray(self.sources, dtype=np.int64).reshape(-1, 3)
        if self.patches.ndim != 4 or self.patches.shape[1] != self.patches.shape[2]:
            raise ModelError(f"bad patch array shape {self.patches.shape}")
        if len(self.patches) == 0:
            raise ModelError("empty template bank")
        if self.size_class in SIZE_CLASSES and SIZE_CLASSES[self.size_class] != self.k:
            raise ModelError(f"{self.size_class} templates must be {SIZE_CLASSES[self.size_class]} "
                             f"wide, got {self.k}")
        if not np.all(np.isfinite(self.patches)):
            raise ModelError("template patches must be finite")
        if self.sigma <= 0:
            raise ModelError("tuning width sigma must be positive")

    def __len__(self) -> int:
        return len(self.patches)

    @property
    def k(self) -> int:
        return self.patches.shape[1]

    @property
    def n_orientations(self) -> int:
        return self.patches.shape[3]

    @property
    def dim(self) -> int:
        return self.k * self.k * self.n_orientations

    @property
    def hash(self) -> str:
        if not self._hash:
            h = hashlib.sha256()
            h.update(f"{self.size_class}|{self.band}|{self.sigma!r}|{self.config_hash}".encode())
            h.update(self.patches.astype("<f4").tobytes())
            h.update(self.sources.astype("<i8").tobytes())
            self._hash = h.hexdigest()[:16]
        return self._hash

    def templates(self) -> list[Template]:
        return [Template(self.size_class, self.patches[i], self.band, tuple(int(v) for v in self.sources[i]), i)
                for i in range(len(self))]

    def subset(self, idx) -> "TemplateBank":
        idx = np.asarray(idx)
        return TemplateBank(self.size_class, self.band, self.patches[idx], self.sources[idx],
                            self.sigma, self.config_hash)

    @classmethod
    def from_templates(cls, templates: list[Template], sigma: float, config_hash: str = "") -> "TemplateBank":
        if not templates:
            raise ModelError("empty template bank")
        first = templates[0]
        return cls(first.size_class, first.scale_band, np.stack([t.patch for t in templates]),
                   np.array([t.source for t in templates]), sigma, config_hash)


def patch_at(c1map: FeatureMap, band: int, row: int, col: int, k: int) -> np.ndarray:
    """The k x k x n_orient C1 sub-array with top-left cell (row, col)."""
    layer = c1map.layer(band)
    return np.ascontiguousarray(layer[:, row:row + k, col:col + k].transpose(1, 2, 0))


def learn_templates(c1maps: list[FeatureMap], n: int, size_class: str = "large", band: int = 7,
                    seed: int = 0, sigma: float = 0.12, config_hash: str = "") -> TemplateBank:
    """Store `n` C1 snapshots at distinct random (image, position) pairs.

    `c1maps` are C1 maps of the training images (they must contain `band`).
    Pairs are drawn uniformly without replacement from all valid positions.
    """
    if size_class not in SIZE_CLASSES:
        raise ModelError(f"unknown size class {size_class!r}")
    if n < 1:
        raise ModelError("need n >= 1 templates")
    if not c1maps:
        raise ModelError("no training images")
    k = SIZE_CLASSES[size_class]
    counts = []
    for i, m in enumerate(c1maps):
        rows, cols = m.grid(band)
        if rows < k or cols < k:
            raise ModelError(f"training image {i}: band {band} C1 grid {rows}x{cols} is smaller "
                             f"than the {k}x{k} {size_class} template")
        counts.append((rows - k + 1, cols - k + 1))
    per_image = np.array([r * c for r, c in counts])
    total = int(per_image.sum())
    if total < n:
        raise ModelError(f"only {total} distinct (image, position) pairs for {n} templates")
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(total, size=n, replace=False))
    rng.shuffle(picks)
    starts = np.concatenate([[0], np.cumsum(per_image)])
    patches, sources = [], []
    for flat in picks:
        img = int(np.searchsorted(starts, flat, side="right") - 1)
        local = int(flat - starts[img])
        row, col = divmod(local, counts[img][1])
        patches.append(storage_precision(patch_at(c1maps[img], band, row, col, k)))
        sources.append((img, row, col))
    return TemplateBank(size_class, band, np.stack(patches), np.array(sources), sigma, config_hash)


def storage_precision(a: np.ndarray) -> np.ndarray:
    """Round to float32 (the bank file precision), returned as float64.

    Templates and the C1 windows they are compared with both pass through
    this, so a bank read back from disk still matches its source exactly.
    """
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def _windows(layer: np.ndarray, k: int) -> np.ndarray:
    """All k x k patches of an (n_orient, rows, cols) layer as (positions, k*k*n_orient)."""
    view = sliding_window_view(storage_precision(layer), (k, k), axis=(1, 2))  # (o, R, C, k, k)
    view = view.transpose(1, 2, 3, 4, 0)  # (R, C, k, k, o)
    return view.reshape(view.shape[0], view.shape[1], -1)


def squared_distances(patches: np.ndarray, templates: np.ndarray) -> np.ndarray:
    """Exact-at-zero squared Euclidean distances, (P, d) x (T, d) -> (P, T).

    Uses the dot-product expansion, then recomputes near-zero entries
    directly so an exact match yields exactly 0.
    """
    pn = np.einsum("ij,ij->i", patches, patches)
    tn = np.einsum("ij,ij->i", templates, templates)
    d2 = pn[:, None] + tn[None, :] - 2.0 * (patches @ templates.T)
    np.maximum(d2, 0.0, out=d2)
    scale = pn[:, None] + tn[None, :]
    close = np.nonzero(d2 <= 1e-9 * np.maximum(scale, 1e-300))
    if close[0].size:
        diff = patches[close[0]] - templates[close[1]]
        d2[close] = np.einsum("ij,ij->i", diff, diff)
    return d2


def tuning(d2: np.ndarray, sigma: float, dim: int) -> np.ndarray:
    """Gaussian tuning, exp(-d2 / (2 sigma^2 dim))."""
    return np.exp(-d2 / (2.0 * sigma * sigma * dim))


def s2_response(c1map: FeatureMap, t: Template, sigma: float = 0.12, band: int | None = None) -> np.ndarray:
    """Response map of one template over every valid position of a C1 band."""
    band = t.scale_band if band is None else band
    if band not in c1map.labels:
        raise ModelError(f"C1 map lacks band {band} needed by template {t.id}")
    k = t.k
    layer = c1map.layer(band)
    if layer.shape[1] < k or layer.shape[2] < k:
        raise ModelError(f"band {band} grid {layer.shape[1:]} smaller than template ({k})")
    if layer.shape[0] != t.patch.shape[2]:
        raise ModelError("orientation count mismatch between C1 map and template")
    win = _windows(layer, k)
    d2 = squared_distances(win.reshape(-1, win.shape[-1]), t.patch.reshape(1, -1))
    return tuning(d2, sigma, t.patch.size).reshape(win.shape[:2])


def c2(c1map: FeatureMap, bank: TemplateBank, pool_bands=None) -> np.ndarray:
    """Max S2 response of every template over positions (and pooled bands).

    `pool_bands` defaults to the bank's own band; bands whose grid is smaller
    than the template are skipped.
    """
    if bank is None or len(bank) == 0:
        raise ModelError("empty template bank")
    pool_bands = (bank.band,) if pool_bands is None else tuple(pool_bands)
    k = bank.k
    flat = bank.patches.reshape(len(bank), -1)
    best = None
    for b in pool_bands:
        layer = c1map.layer(b)
        if layer.shape[1] < k or layer.shape[2] < k:
            continue
        if layer.shape[0] != bank.n_orientations:
            raise ModelError("orientation count mismatch between C1 map and bank")
        win = _windows(layer, k).reshape(-1, flat.shape[1])
        d2 = squared_distances(win, flat).min(axis=0)
        best = d2 if best is None else np.minimum(best, d2)
    if best is None:
        raise ModelError(f"no pooled band {pool_bands} has a grid of at least {k}x{k}")
    # max response == response at the minimum distance (tuning is monotone)
    return tuning(best, bank.sigma, bank.dim)


def dissimilarity(a, b) -> float:
    """Euclidean distance between two C2 vectors (arrays or ``C2Vector``)."""
    ha, hb = getattr(a, "bank_hash", None), getattr(b, "bank_hash", None)
    if ha is not None and hb is not None and ha != hb:
        raise ModelError(f"C2 vectors come from different banks ({ha} vs {hb})")
    a = np.asarray(getattr(a, "values", a), dtype=np.float64)
    b = np.asarray(getattr(b, "values", b), dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ModelError(f"C2 vectors must be 1-D with equal length, got {a.shape} and {b.shape}")
    d = np.abs(a - b)
    top = d.max(initial=0.0)
    if top == 0:
        return 0.0
    # scaled so tiny differences do not underflow to 0 when squared
    return float(top * np.sqrt(np.sum((d / top) ** 2)))
