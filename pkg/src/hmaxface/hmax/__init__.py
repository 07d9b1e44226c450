"""Four-layer HMAX hierarchy (S1, C1, S2, C2) with size-classed templates."""

from .layers import (
    C1Params,
    FeatureMap,
    GaborParams,
    ModelError,
    c1,
    c1_from_image,
    gabor_filter,
    oval_extent,
    s1,
)
from .model import C2Vector, HmaxModel, ModelConfig
from .storage import C2CacheDir, StorageError, image_id, load_bank, save_bank, verify_bank
from .templates import (
    SIZE_CLASSES,
    Template,
    TemplateBank,
    c2,
    dissimilarity,
    learn_templates,
    s2_response,
)

face_oval_extent_check = oval_extent
