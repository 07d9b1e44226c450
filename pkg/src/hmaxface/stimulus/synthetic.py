"""Procedural frontal faces standing in for a licensed face database.

Each face is drawn from a per-face random stream derived from (seed, index),
so face ``i`` is identical whatever ``count`` is requested.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .transforms import Region, StimulusError

MIN_CANVAS = 64


@dataclass(frozen=True)
class FaceLayout:
    """Part geometry of one synthetic face, in fractions of canvas height/width."""

    skin: float
    eye_y: float
    eye_dx: float
    eye_w: float
    eye_h: float
    iris: float
    brow_dy: float
    brow_w: float
    brow_h: float
    brow_tilt: float
    brow_dark: float
    nose_top: float
    nose_y: float
    nose_w: float
    nostril: float
    mouth_y: float
    mouth_w: float
    mouth_h: float
    mouth_dark: float
    jaw: float


@dataclass(frozen=True)
class FaceStyle:
    """Rendering options. Part contrasts scale each part's deviation from the skin tone."""

    eyes: float = 1.0
    brows: float = 0.5
    nose: float = 1.0
    mouth: float = 1.0
    shading: float = 1.0
    blur: float = 1.2
    noise: float = 0.01


def random_layout(rng: np.random.Generator) -> FaceLayout:
    u = rng.uniform
    eye_y = u(0.37, 0.45)
    return FaceLayout(
        skin=u(0.55, 0.75),
        eye_y=eye_y,
        eye_dx=u(0.14, 0.21),
        eye_w=u(0.05, 0.085),
        eye_h=u(0.022, 0.04),
        iris=u(0.05, 0.3),
        brow_dy=u(0.045, 0.08),
        brow_w=u(0.06, 0.1),
        brow_h=u(0.01, 0.022),
        brow_tilt=u(-0.25, 0.25),
        brow_dark=u(0.15, 0.45),
        nose_top=eye_y + u(0.02, 0.06),
        nose_y=u(0.57, 0.65),
        nose_w=u(0.035, 0.065),
        nostril=u(0.1, 0.35),
        mouth_y=u(0.71, 0.79),
        mouth_w=u(0.08, 0.14),
        mouth_h=u(0.012, 0.03),
        mouth_dark=u(0.15, 0.45),
        jaw=u(0.36, 0.44),
    )


def _ellipse(yy, xx, cy, cx, ry, rx, soft=1.0, angle=0.0):
    """Soft-edged filled ellipse, 1 inside, 0 outside, ~`soft` px transition."""
    dy, dx = yy - cy, xx - cx
    if angle:
        c, s = np.cos(angle), np.sin(angle)
        dy, dx = c * dy - s * dx, s * dy + c * dx
    r = np.sqrt((dy / ry) ** 2 + (dx / rx) ** 2)
    edge = soft / max(min(ry, rx), 1e-9)
    return np.clip((1.0 - r) / edge + 0.5, 0.0, 1.0)


def draw_face(layout: FaceLayout, canvas: tuple[int, int], rng: np.random.Generator,
              style: FaceStyle | None = None) -> tuple[np.ndarray, Region]:
    """Render one face and return it with the bounding box of its eyes and brows."""
    st = style or FaceStyle()
    h, w = canvas
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy, cx = h / 2.0, w / 2.0
    L = layout
    img = np.full((h, w), 0.25)

    head = _ellipse(yy, xx, cy + 0.02 * h, cx, 0.5 * h, L.jaw * w * 1.05, soft=2.0)
    shade = L.skin + st.shading * (0.08 * (0.5 - yy / h) - 0.05 * ((xx - cx) / (0.5 * w)) ** 2)
    img = img * (1 - head) + shade * head

    def paint(mask, value, contrast):
        nonlocal img
        value = L.skin + contrast * (value - L.skin)
        img = img * (1 - mask) + value * mask

    eye_rows, eye_cols = [], []
    for side in (-1, 1):
        ex = cx + side * L.eye_dx * w
        ey = L.eye_y * h
        paint(_ellipse(yy, xx, ey, ex, L.eye_h * h, L.eye_w * w), L.skin + 0.2, st.eyes)
        paint(_ellipse(yy, xx, ey, ex, L.eye_h * h * 0.95, L.eye_h * h * 0.95), L.iris, st.eyes)
        by = ey - L.brow_dy * h
        paint(_ellipse(yy, xx, by, ex + side * 0.01 * w, L.brow_h * h, L.brow_w * w,
                       angle=side * L.brow_tilt), L.brow_dark, st.brows)
        eye_rows += [by - L.brow_h * h - 2, ey + L.eye_h * h + 2]
        eye_cols += [ex - max(L.eye_w, L.brow_w) * w - 2, ex + (max(L.eye_w, L.brow_w) + 0.01) * w + 2]

    # nose: bright ridge flanked by shadows, nostrils at the base
    ny0, ny1 = L.nose_top * h, L.nose_y * h
    ridge_y = (ny0 + ny1) / 2.0
    ridge_ry = (ny1 - ny0) / 2.0
    for side in (-1, 1):
        t = np.clip((yy - ny0) / max(ny1 - ny0, 1.0), 0.0, 1.0)
        flank = _ellipse(yy, xx + side * (-L.nose_w * w * (0.3 + 0.7 * t)), ridge_y, cx,
                         ridge_ry, 0.012 * w)
        paint(flank, L.skin - 0.18, st.nose)
        paint(_ellipse(yy, xx, ny1 - 0.005 * h, cx + side * L.nose_w * w * 0.8,
                       0.012 * h, 0.018 * w), L.nostril, st.nose)
    paint(_ellipse(yy, xx, ridge_y, cx, ridge_ry, 0.01 * w), L.skin + 0.12, st.nose)

    my = L.mouth_y * h
    paint(_ellipse(yy, xx, my, cx, L.mouth_h * h, L.mouth_w * w), L.mouth_dark, st.mouth)
    paint(_ellipse(yy, xx, my + L.mouth_h * h * 1.6, cx, 0.008 * h, L.mouth_w * w * 0.6),
          L.skin - 0.1, st.mouth)

    blur, noise = st.blur, st.noise
    if blur > 0:
        img = ndimage.gaussian_filter(img, blur)
    if noise > 0:
        img = img + rng.normal(0.0, noise, size=img.shape)
    img = np.clip(img, 0.0, 1.0)

    region = Region(int(np.floor(max(min(eye_rows), 0))), int(np.floor(max(min(eye_cols), 0))),
                    int(np.ceil(min(max(eye_rows), h))), int(np.ceil(min(max(eye_cols), w))))
    return img, region


def gen_synthetic_faces_with_regions(count: int, seed: int, canvas: tuple[int, int] = (272, 272),
                                     style: FaceStyle | None = None
                                     ) -> tuple[list[np.ndarray], list[Region]]:
    if count < 1:
        raise StimulusError("count must be >= 1")
    h, w = canvas
    if h < MIN_CANVAS or w < MIN_CANVAS:
        raise StimulusError(f"canvas {canvas} too small; need at least {MIN_CANVAS}x{MIN_CANVAS}")
    faces, regions = [], []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        img, region = draw_face(random_layout(rng), canvas, rng, style)
        faces.append(img)
        regions.append(region)
    return faces, regions


def gen_synthetic_faces(count: int, seed: int, canvas: tuple[int, int] = (272, 272),
                        style: FaceStyle | None = None) -> list[np.ndarray]:
    return gen_synthetic_faces_with_regions(count, seed, canvas, style)[0]
