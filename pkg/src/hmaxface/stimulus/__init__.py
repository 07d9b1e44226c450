"""Stimulus loading, synthesis and transforms."""

from .io import ImageLoadError, load_images, read_image, read_pgm, write_pgm
from .synthetic import FaceStyle, gen_synthetic_faces, gen_synthetic_faces_with_regions
from .transforms import (
    DEFAULT_BACKGROUND,
    OvalMask,
    Region,
    StimulusError,
    apply_attention_cfe,
    apply_attention_wpe,
    invert,
    make_composite,
    make_whole_part,
    normalize_stats,
    pad,
    preprocess,
    resize,
    split_train_test,
    translate,
)
