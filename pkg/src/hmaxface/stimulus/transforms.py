"""Pure image transforms that build experiment stimuli.

Images are plain 2-D float64 numpy arrays (rows x cols). Every function
returns a new array and never mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

DEFAULT_BACKGROUND = 0.5


class StimulusError(ValueError):
    """Raised when a stimulus operation gets inputs it cannot handle."""


def as_image(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise StimulusError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise StimulusError("image contains non-finite pixels")
    return arr


@dataclass(frozen=True)
class OvalMask:
    """Axis-aligned elliptical aperture in pixel coordinates."""

    center_row: float
    center_col: float
    half_height: float
    half_width: float
    background: float | None = None

    def __post_init__(self):
        if self.half_height <= 0 or self.half_width <= 0:
            raise StimulusError("oval semi-axes must be positive")

    @classmethod
    def default(cls, shape: tuple[int, int], background: float | None = None,
                width_frac: float = 0.38, height_frac: float = 0.48) -> "OvalMask":
        h, w = shape
        return cls((h - 1) / 2.0, (w - 1) / 2.0, height_frac * h, width_frac * w, background)

    def bbox(self) -> tuple[float, float, float, float]:
        """(top, left, bottom, right) of the ellipse, inclusive float bounds."""
        return (self.center_row - self.half_height, self.center_col - self.half_width,
                self.center_row + self.half_height, self.center_col + self.half_width)

    def fits(self, shape: tuple[int, int]) -> bool:
        top, left, bottom, right = self.bbox()
        return top >= -0.5 and left >= -0.5 and bottom <= shape[0] - 0.5 and right <= shape[1] - 0.5

    def mask(self, shape: tuple[int, int]) -> np.ndarray:
        rows = (np.arange(shape[0]) - self.center_row) / self.half_height
        cols = (np.arange(shape[1]) - self.center_col) / self.half_width
        return rows[:, None] ** 2 + cols[None, :] ** 2 <= 1.0

    def scaled(self, factor: float) -> "OvalMask":
        # pixel-centre convention of ndimage.zoom(grid_mode=True)
        return OvalMask((self.center_row + 0.5) * factor - 0.5, (self.center_col + 0.5) * factor - 0.5,
                        self.half_height * factor, self.half_width * factor, self.background)


@dataclass(frozen=True)
class Region:
    """Half-open rectangle [top, bottom) x [left, right)."""

    top: int
    left: int
    bottom: int
    right: int

    def __post_init__(self):
        if not (self.top < self.bottom and self.left < self.right):
            raise StimulusError(f"empty region {self}")

    def check(self, shape: tuple[int, int]) -> None:
        if self.top < 0 or self.left < 0 or self.bottom > shape[0] or self.right > shape[1]:
            raise StimulusError(f"region {self} out of bounds for image of shape {shape}")

    @property
    def center(self) -> tuple[float, float]:
        return ((self.top + self.bottom - 1) / 2.0, (self.left + self.right - 1) / 2.0)

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.top, self.bottom), slice(self.left, self.right)

    def shifted(self, drow: int, dcol: int) -> "Region":
        return Region(self.top + drow, self.left + dcol, self.bottom + drow, self.right + dcol)

    def flipped(self, height: int) -> "Region":
        """The same region after an upside-down flip of an image with `height` rows."""
        return Region(height - self.bottom, self.left, height - self.top, self.right)

    def scaled(self, factor: float) -> "Region":
        return Region(int(np.floor(self.top * factor)), int(np.floor(self.left * factor)),
                      int(np.ceil(self.bottom * factor)), int(np.ceil(self.right * factor)))

    def union(self, other: "Region") -> "Region":
        return Region(min(self.top, other.top), min(self.left, other.left),
                      max(self.bottom, other.bottom), max(self.right, other.right))

    def as_dict(self) -> dict:
        return {"top": self.top, "left": self.left, "bottom": self.bottom, "right": self.right}


def resize(img: np.ndarray, scale: float) -> np.ndarray:
    """Bilinear resize by `scale`; output size is round(size * scale)."""
    img = as_image(img)
    if not 0 < scale <= 1:
        raise StimulusError(f"scale must be in (0, 1], got {scale}")
    if scale == 1:
        return img.copy()
    out_shape = tuple(max(1, int(round(n * scale))) for n in img.shape)
    zoom = [o / n for o, n in zip(out_shape, img.shape)]
    return ndimage.zoom(img, zoom, order=1, mode="nearest", grid_mode=True)


def normalize_stats(img: np.ndarray, mask: np.ndarray, target_mean: float, target_var: float,
                    background: float) -> np.ndarray:
    """Affinely rescale in-mask pixels to the target mean and variance; fill the rest."""
    vals = img[mask]
    if vals.size < 2:
        raise StimulusError("normalization region has fewer than 2 pixels")
    mean = vals.mean()
    var = vals.var()
    # interpolation leaves ~1e-16 ripples on flat input; treat those as constant
    if not np.ptp(vals) > 1e-12 * max(1.0, abs(mean)):
        raise StimulusError("zero variance inside the oval; normalization undefined")
    if target_var <= 0:
        raise StimulusError("target variance must be positive")
    out = np.full(img.shape, float(background))
    out[mask] = (vals - mean) * np.sqrt(target_var / var) + target_mean
    return out


def preprocess(img: np.ndarray, scale: float = 0.75, oval: OvalMask | None = None,
               target_mean: float = 0.5, target_var: float = 0.02) -> np.ndarray:
    """Downscale, crop to an oval aperture, and match in-oval mean/variance.

    `oval` is expressed in coordinates of the *scaled* image; the default is
    the centred oval from ``OvalMask.default``. Pixels outside the oval are
    set to the oval's background value (the target mean unless given).
    """
    scaled = resize(img, scale)
    if oval is None:
        oval = OvalMask.default(scaled.shape)
    if not oval.fits(scaled.shape):
        raise StimulusError(f"oval {oval} does not fit in a {scaled.shape} image")
    mask = oval.mask(scaled.shape)
    if mask.sum() < 2:
        raise StimulusError("degenerate oval covers fewer than 2 pixels")
    background = target_mean if oval.background is None else oval.background
    return normalize_stats(scaled, mask, target_mean, target_var, background)


def split_train_test(faces: list) -> tuple[list, list]:
    """Odd positions (1-based) train, even positions test."""
    if len(faces) < 2:
        raise StimulusError("need at least 2 faces to split")
    return list(faces[0::2]), list(faces[1::2])


def invert(img: np.ndarray) -> np.ndarray:
    return as_image(img)[::-1].copy()


def translate(img: np.ndarray, drow: int, dcol: int, background: float = DEFAULT_BACKGROUND) -> np.ndarray:
    """Shift content by (drow, dcol) pixels; vacated pixels take `background`."""
    h, w = img.shape
    out = np.full((h, w), float(background))
    if abs(drow) >= h or abs(dcol) >= w:
        return out
    src_r = slice(max(0, -drow), h - max(0, drow))
    dst_r = slice(max(0, drow), h - max(0, -drow))
    src_c = slice(max(0, -dcol), w - max(0, dcol))
    dst_c = slice(max(0, dcol), w - max(0, -dcol))
    out[dst_r, dst_c] = img[src_r, src_c]
    return out


def pad(img: np.ndarray, top: int = 0, bottom: int = 0, left: int = 0, right: int = 0,
        background: float = DEFAULT_BACKGROUND) -> np.ndarray:
    """Embed `img` in a larger background canvas."""
    img = as_image(img)
    return np.pad(img, ((top, bottom), (left, right)), constant_values=float(background))


def make_composite(top_src: np.ndarray, bottom_src: np.ndarray, aligned: bool = True,
                   gap_px: int = 2, misalign_px: int = 0,
                   background: float = DEFAULT_BACKGROUND) -> np.ndarray:
    """Join the top half of one face to the bottom half of another.

    The result has ``h + gap_px`` rows: rows ``[0, h//2)`` from `top_src`, a
    background gap, then rows ``[h//2, h)`` of `bottom_src`, shifted right by
    `misalign_px` when `aligned` is false.
    """
    top_src, bottom_src = as_image(top_src), as_image(bottom_src)
    if top_src.shape != bottom_src.shape:
        raise StimulusError(f"shape mismatch: {top_src.shape} vs {bottom_src.shape}")
    if gap_px < 0:
        raise StimulusError("gap_px must be >= 0")
    h, w = top_src.shape
    if abs(misalign_px) >= w:
        raise StimulusError(f"|misalign_px| must be < width ({w})")
    half = h // 2
    bottom = bottom_src[half:]
    if not aligned and misalign_px:
        bottom = translate(bottom, 0, misalign_px, background)
    gap = np.full((gap_px, w), float(background))
    return np.vstack([top_src[:half], gap, bottom])


def composite_halves(height: int, gap_px: int, inverted: bool = False) -> tuple[slice, slice]:
    """Row slices (attended half, other half) of a composite with `height` rows.

    For an inverted composite the original top half sits at the bottom.
    """
    top_h = (height - gap_px) // 2
    other_h = height - gap_px - top_h
    if inverted:
        return slice(height - top_h, height), slice(0, other_h)
    return slice(0, top_h), slice(top_h + gap_px, height)


def _center_pad(length: int, center: float) -> tuple[int, int]:
    """Padding (before, after) that puts coordinate `center` at the middle of the axis."""
    d = int(round(2 * center - (length - 1)))
    return (0, d) if d >= 0 else (-d, 0)


def apply_attention_cfe(img: np.ndarray, attenuation: float = 0.1, gap_px: int = 2,
                        inverted: bool = False, background: float = DEFAULT_BACKGROUND,
                        grow: bool = False, pivot: float = 0.0) -> np.ndarray:
    """Attenuate the unattended half of a composite and centre the attended half.

    The attended half is the one built from the top source (the physical top,
    or the physical bottom when `inverted`). Content is translated vertically
    first, with vacated rows set to `background`; the unattended half is then
    multiplied by `attenuation` at its translated position. With `grow` the
    canvas is extended with background rows instead, so no content is lost.
    A non-zero `pivot` scales deviations from that level instead of raw values.
    """
    img = as_image(img)
    if not 0 <= attenuation <= 1:
        raise StimulusError("attenuation must be in [0, 1]")
    h = img.shape[0]
    attended, other = composite_halves(h, gap_px, inverted)
    att_center = (attended.start + attended.stop - 1) / 2.0
    if grow:
        before, after = _center_pad(h, att_center)
        out = pad(img, before, after, 0, 0, background)
        shift = before
    else:
        shift = int(round((h - 1) / 2.0 - att_center))
        out = translate(img, shift, 0, background)
    n = out.shape[0]
    lo = min(max(other.start + shift, 0), n)
    hi = min(max(other.stop + shift, 0), n)
    out[lo:hi] = pivot + attenuation * (out[lo:hi] - pivot)
    return out


def feather_weights(region: Region, shape: tuple[int, int], feather: int = 2) -> np.ndarray:
    """Blend weight: 1 deep inside `region`, linear ramp over `feather` px at its edge, 0 outside."""
    w = np.zeros(shape)
    rows = np.arange(region.top, region.bottom)
    cols = np.arange(region.left, region.right)
    dr = np.minimum(rows - region.top, region.bottom - 1 - rows)
    dc = np.minimum(cols - region.left, region.right - 1 - cols)
    d = np.minimum(dr[:, None], dc[None, :])
    w[region.slices] = np.minimum(1.0, (d + 1) / (feather + 1.0))
    return w


def make_whole_part(eyes_src: np.ndarray, base_src: np.ndarray, eye_region: Region,
                    feather: int = 2, background: float = DEFAULT_BACKGROUND
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Blend the eye region of `eyes_src` into `base_src`; also return the cropped part."""
    eyes_src, base_src = as_image(eyes_src), as_image(base_src)
    if eyes_src.shape != base_src.shape:
        raise StimulusError(f"shape mismatch: {eyes_src.shape} vs {base_src.shape}")
    eye_region.check(base_src.shape)
    wts = feather_weights(eye_region, base_src.shape, feather)
    whole = base_src * (1.0 - wts) + eyes_src * wts
    part = np.full(whole.shape, float(background))
    part[eye_region.slices] = whole[eye_region.slices]
    return whole, part


def apply_attention_wpe(img: np.ndarray, eye_region: Region, attenuation: float = 0.5,
                        background: float = DEFAULT_BACKGROUND, grow: bool = False,
                        pivot: float = 0.0) -> np.ndarray:
    """Centre the eye region, then attenuate everything outside it.

    With `grow` the canvas is extended with background instead of
    translating content within it. A non-zero `pivot` scales deviations from
    that level instead of raw values.
    """
    img = as_image(img)
    eye_region.check(img.shape)
    if not 0 <= attenuation <= 1:
        raise StimulusError("attenuation must be in [0, 1]")
    h, w = img.shape
    rc, cc = eye_region.center
    if grow:
        top, bottom = _center_pad(h, rc)
        left, right = _center_pad(w, cc)
        out = pad(img, top, bottom, left, right, background)
        drow, dcol = top, left
    else:
        drow = int(round((h - 1) / 2.0 - rc))
        dcol = int(round((w - 1) / 2.0 - cc))
        out = translate(img, drow, dcol, background)
    keep = np.zeros(out.shape, dtype=bool)
    moved = eye_region.shifted(drow, dcol)
    keep[max(moved.top, 0):max(moved.bottom, 0), max(moved.left, 0):max(moved.right, 0)] = True
    out[~keep] = pivot + attenuation * (out[~keep] - pivot)
    return out
