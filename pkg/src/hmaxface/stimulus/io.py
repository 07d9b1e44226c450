"""Reading and writing grayscale images (binary PGM and PNG)."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

IMAGE_SUFFIXES = (".pgm", ".png")

_PGM_HEADER = re.compile(rb"P5\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s")


class ImageLoadError(OSError):
    """One or more image files could not be read.

    ``failures`` maps file name to the reason; ``loaded`` holds the names that
    were readable.
    """

    def __init__(self, message: str, failures: dict[str, str] | None = None,
                 loaded: list[str] | None = None):
        super().__init__(message)
        self.failures = failures or {}
        self.loaded = loaded or []


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary (P5) PGM as floats in [0, 1]."""
    data = Path(path).read_bytes()
    m = _PGM_HEADER.match(data)
    if m is None:
        raise ValueError("not a binary P5 PGM file")
    width, height, maxval = (int(g) for g in m.groups())
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ValueError(f"bad PGM header: {width}x{height} maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    body = data[m.end():]
    need = width * height * dtype.itemsize
    if len(body) < need:
        raise ValueError(f"truncated PGM: {len(body)} of {need} pixel bytes")
    pix = np.frombuffer(body[:need], dtype=dtype).reshape(height, width)
    return pix.astype(np.float64) / maxval


def write_pgm(path: str | Path, img: np.ndarray, lo: float = 0.0, hi: float = 1.0) -> Path:
    """Write an 8-bit P5 PGM, mapping [lo, hi] linearly onto [0, 255] with clipping."""
    img = np.asarray(img, dtype=np.float64)
    scaled = np.clip((img - lo) / (hi - lo), 0.0, 1.0)
    pix = np.round(scaled * 255).astype(np.uint8)
    path = Path(path)
    header = f"P5\n{pix.shape[1]} {pix.shape[0]}\n255\n".encode("ascii")
    path.write_bytes(header + pix.tobytes())
    return path


def read_png(path: str | Path) -> np.ndarray:
    from PIL import Image as PILImage

    with PILImage.open(path) as im:
        im.load()
        if im.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(im, dtype=np.float64)
            return arr / (65535.0 if arr.max() > 255 else 255.0)
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def read_image(path: str | Path) -> np.ndarray:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        return read_pgm(path)
    if suffix == ".png":
        return read_png(path)
    raise ValueError(f"unsupported image type {suffix!r}")


def image_files(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ImageLoadError(f"{directory} is not a directory")
    return sorted((p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES),
                  key=lambda p: p.name)


def load_images(directory: str | Path) -> list[np.ndarray]:
    """Load every PGM/PNG in `directory`, ordered lexicographically by file name."""
    files = image_files(directory)
    if not files:
        raise ImageLoadError(f"no .pgm or .png images in {directory}")
    images, failures, loaded = [], {}, []
    for path in files:
        try:
            images.append(read_image(path))
            loaded.append(path.name)
        except Exception as exc:  # noqa: BLE001 - report every bad file, not just the first
            failures[path.name] = str(exc) or type(exc).__name__
    if failures:
        detail = "; ".join(f"{name}: {why}" for name, why in failures.items())
        raise ImageLoadError(f"could not read {len(failures)} file(s): {detail}", failures, loaded)
    return images
