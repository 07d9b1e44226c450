"""S1 (Gabor) and C1 (local max) layers.

Feature maps keep one array per scale or band, shaped
``(n_orientations, rows, cols)``, because grid sizes differ between bands.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as sfft


class ModelError(ValueError):
    pass


def _default_sizes() -> tuple[int, ...]:
    return tuple(range(7, 42, 2))


def _default_sigmas(sizes) -> tuple[float, ...]:
    # quadratic fit of the standard HMAX S1 table, extended to 18 sizes
    return tuple(round(0.0036 * s * s + 0.35 * s + 0.18, 4) for s in sizes)


@dataclass(frozen=True)
class GaborParams:
    sizes: tuple[int, ...] = field(default_factory=_default_sizes)
    sigmas: tuple[float, ...] = ()
    wavelengths: tuple[float, ...] = ()
    gamma: float = 0.3
    orientations: tuple[float, ...] = (0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4)
    # contrast floor, as a fraction of the image's largest local patch energy
    norm_floor: float = 0.05

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if not self.sigmas:
            object.__setattr__(self, "sigmas", _default_sigmas(sizes))
        if not self.wavelengths:
            object.__setattr__(self, "wavelengths", tuple(round(s / 0.8, 4) for s in self.sigmas))
        object.__setattr__(self, "orientations", tuple(float(t) for t in self.orientations))
        if any(s % 2 == 0 or s < 1 for s in sizes):
            raise ModelError("Gabor filter sizes must be odd and positive")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ModelError("Gabor filter sizes must increase with scale")
        if not (len(self.sigmas) == len(self.wavelengths) == len(sizes)):
            raise ModelError("need one sigma and one wavelength per filter size")
        if min(self.sigmas) <= 0 or min(self.wavelengths) <= 0:
            raise ModelError("sigma and wavelength must be positive")
        if len(self.orientations) < 2:
            raise ModelError("need at least 2 orientations")
        if self.norm_floor < 0:
            raise ModelError("norm_floor must be >= 0")

    @property
    def n_scales(self) -> int:
        return len(self.sizes)

    @property
    def n_orientations(self) -> int:
        return len(self.orientations)


def _default_windows() -> tuple[int, ...]:
    return (8, 9, 11, 13, 15, 16, 18, 20, 22)


@dataclass(frozen=True)
class C1Params:
    windows: tuple[int, ...] = field(default_factory=_default_windows)
    strides: tuple[int, ...] = ()
    # 0-based S1 scale indices pooled by each band
    scales: tuple[tuple[int, ...], ...] = tuple((2 * b, 2 * b + 1) for b in range(9))

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(int(w) for w in self.windows))
        if not self.strides:
            object.__setattr__(self, "strides", tuple(max(1, w // 2) for w in self.windows))
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        object.__setattr__(self, "scales", tuple(tuple(int(i) for i in g) for g in self.scales))
        if not (len(self.windows) == len(self.strides) == len(self.scales)):
            raise ModelError("windows, strides and scales need one entry per band")
        if min(self.windows) < 1 or min(self.strides) < 1:
            raise ModelError("C1 windows and strides must be >= 1")
        if any(len(g) == 0 for g in self.scales):
            raise ModelError("every C1 band must pool at least one S1 scale")

    @property
    def n_bands(self) -> int:
        return len(self.windows)

    def check_against(self, gabor: GaborParams) -> None:
        used = {i for g in self.scales for i in g}
        if max(used) >= gabor.n_scales:
            raise ModelError(f"C1 bands reference S1 scale {max(used)} but only "
                             f"{gabor.n_scales} exist")
        missing = set(range(gabor.n_scales)) - used
        if missing:
            raise ModelError(f"S1 scales {sorted(missing)} are not pooled by any C1 band")


def config_hash(*params) -> str:
    blob = json.dumps([asdict(p) for p in params], sort_keys=True, default=float)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class FeatureMap:
    """Responses per scale (S1) or band (C1) with their pixel geometry.

    ``labels`` are 1-based scale/band numbers. Cell ``(r, c)`` of layer ``i``
    is centred at pixel ``offsets[i] + stride * (r, c)``.
    """

    kind: str
    labels: tuple[int, ...]
    layers: list[np.ndarray]
    strides: tuple[int, ...]
    offsets: tuple[float, ...]
    image_shape: tuple[int, int]

    def index(self, label: int) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ModelError(f"{self.kind} map has no layer {label}; available {self.labels}") from None

    def layer(self, label: int) -> np.ndarray:
        return self.layers[self.index(label)]

    def grid(self, label: int) -> tuple[int, int]:
        return self.layer(label).shape[1:]


def gabor_filter(size: int, wavelength: float, sigma: float, gamma: float, theta: float) -> np.ndarray:
    """Zero-mean, unit-norm Gabor filter, outside a circular support set to 0."""
    r = size // 2
    y, x = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
    xr = x * np.cos(theta) + y * np.sin(theta)
    yr = -x * np.sin(theta) + y * np.cos(theta)
    g = np.exp(-(xr ** 2 + (gamma * yr) ** 2) / (2 * sigma ** 2)) * np.cos(2 * np.pi * xr / wavelength)
    g[np.sqrt(x ** 2 + y ** 2) > r + 0.5] = 0.0
    support = np.sqrt(x ** 2 + y ** 2) <= r + 0.5
    g[support] -= g[support].mean()
    return g / np.linalg.norm(g)


@lru_cache(maxsize=8)
def filter_bank(params: GaborParams) -> tuple[np.ndarray, ...]:
    """One (n_orientations, size, size) stack per scale."""
    return tuple(
        np.stack([gabor_filter(s, lam, sig, params.gamma, th) for th in params.orientations])
        for s, lam, sig in zip(params.sizes, params.wavelengths, params.sigmas)
    )


def _box_sum(integral: np.ndarray, k: int) -> np.ndarray:
    return integral[k:, k:] - integral[:-k, k:] - integral[k:, :-k] + integral[:-k, :-k]


def _integral(img: np.ndarray) -> np.ndarray:
    out = np.zeros((img.shape[0] + 1, img.shape[1] + 1))
    out[1:, 1:] = img.cumsum(0).cumsum(1)
    return out


def local_energy(img: np.ndarray, size: int) -> np.ndarray:
    """Sum of squared deviations from the local mean over every valid size x size window."""
    n = size * size
    s1 = _box_sum(_integral(img), size)
    s2 = _box_sum(_integral(img * img), size)
    return np.maximum(s2 - s1 * s1 / n, 0.0)


@lru_cache(maxsize=48)
def _kernel_spectrum(params: GaborParams, scale: int, fft_shape: tuple[int, int]) -> np.ndarray:
    filters = filter_bank(params)[scale]
    flipped = filters[:, ::-1, ::-1]
    return sfft.rfft2(flipped, s=fft_shape, axes=(-2, -1))


def s1(img: np.ndarray, params: GaborParams | None = None, scales=None) -> FeatureMap:
    """Locally normalized Gabor responses over the valid region.

    Each response is the correlation of the image with a zero-mean, unit-norm
    filter divided by the norm of the mean-subtracted image patch (plus a
    floor proportional to the image's strongest patch energy at that scale),
    so responses lie in [-1, 1] and are invariant to ``a * img + b``, a > 0.
    """
    params = params or GaborParams()
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ModelError("s1 expects a 2-D image")
    scales = range(params.n_scales) if scales is None else sorted(scales)
    biggest = max(params.sizes[i] for i in scales)
    if img.shape[0] < biggest or img.shape[1] < biggest:
        raise ModelError(f"image {img.shape} smaller than the largest filter ({biggest} px)")
    centered = img - img.mean()
    fft_shape = tuple(sfft.next_fast_len(n, real=True) for n in img.shape)
    spectrum = sfft.rfft2(centered, s=fft_shape)
    h, w = img.shape
    layers, offsets = [], []
    for i in scales:
        size = params.sizes[i]
        conv = sfft.irfft2(spectrum[None] * _kernel_spectrum(params, i, fft_shape), s=fft_shape,
                           axes=(-2, -1))
        num = conv[:, size - 1:h, size - 1:w]
        energy = local_energy(centered, size)
        denom = np.sqrt(energy + params.norm_floor * energy.max())
        with np.errstate(invalid="ignore", divide="ignore"):
            resp = np.where(denom > 0, num / denom, 0.0)
        # FFT round-off where the patch is flat
        resp[:, energy <= 1e-12 * max(energy.max(), 1e-300)] = 0.0
        layers.append(np.clip(resp, -1.0, 1.0))
        offsets.append((size - 1) / 2.0)
    return FeatureMap("s1", tuple(i + 1 for i in scales), layers, (1,) * len(layers),
                      tuple(offsets), img.shape)


def max_pool(x: np.ndarray, window: int, stride: int) -> np.ndarray:
    """Max over window x window blocks of the last two axes, stepping by `stride`."""
    rows, cols = x.shape[-2:]
    if rows < window or cols < window:
        raise ModelError(f"grid {rows}x{cols} smaller than pooling window {window}")
    view = sliding_window_view(x, (window, window), axis=(-2, -1))[..., ::stride, ::stride, :, :]
    return view.max(axis=(-2, -1))


def c1(s1map: FeatureMap, params: C1Params | None = None, gabor: GaborParams | None = None,
       bands=None) -> FeatureMap:
    """Max of |S1| over each band's scales and spatial window.

    S1 maps of different filter sizes are centre-cropped to the smallest
    valid grid before pooling so that all pooled scales share pixel centres.
    """
    params = params or C1Params()
    gabor = gabor or GaborParams()
    params.check_against(gabor)
    if s1map.kind != "s1":
        raise ModelError("c1 needs an S1 feature map")
    bands = range(1, params.n_bands + 1) if bands is None else sorted(bands)
    layers, strides, offsets = [], [], []
    for b in bands:
        group = params.scales[b - 1]
        missing = [i + 1 for i in group if i + 1 not in s1map.labels]
        if missing:
            raise ModelError(f"band {b} needs S1 scales {missing} that were not computed")
        fmax = max(gabor.sizes[i] for i in group)
        pooled = None
        for i in group:
            m = np.abs(s1map.layer(i + 1))
            trim = (fmax - gabor.sizes[i]) // 2
            if trim:
                m = m[:, trim:m.shape[1] - trim, trim:m.shape[2] - trim]
            pooled = m if pooled is None else np.maximum(pooled, m)
        win, stride = params.windows[b - 1], params.strides[b - 1]
        layers.append(max_pool(pooled, win, stride))
        strides.append(stride)
        offsets.append((fmax - 1) / 2.0 + (win - 1) / 2.0)
    return FeatureMap("c1", tuple(bands), layers, tuple(strides), tuple(offsets), s1map.image_shape)


def scales_for_bands(c1params: C1Params, bands) -> list[int]:
    return sorted({i for b in bands for i in c1params.scales[b - 1]})


def c1_from_image(img: np.ndarray, gabor: GaborParams | None = None, c1params: C1Params | None = None,
                  bands=None) -> FeatureMap:
    """S1 then C1, computing only the S1 scales the requested bands need."""
    gabor = gabor or GaborParams()
    c1params = c1params or C1Params()
    bands = range(1, c1params.n_bands + 1) if bands is None else sorted(bands)
    return c1(s1(img, gabor, scales_for_bands(c1params, bands)), c1params, gabor, bands)


def oval_extent(c1map: FeatureMap, oval, band: int = 7) -> tuple[int, int]:
    """Width and height of an oval's bounding box in C1 cells of `band`.

    Counts lattice points of the band's cell-centre grid (extended past the
    valid region) that fall inside the bounding box. Depends on geometry only.
    """
    i = c1map.index(band)
    stride, offset = c1map.strides[i], c1map.offsets[i]
    top, left, bottom, right = oval.bbox()

    def count(lo, hi):
        return int(np.floor((hi - offset) / stride) - np.ceil((lo - offset) / stride) + 1)

    return count(left, right), count(top, bottom)
