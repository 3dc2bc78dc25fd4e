"""Learnable networks"""

from fcmf.models.base import Module
from fcmf.models.encoder import TextEncoder, encode_text
from fcmf.models.fcmf import FCMFModel
from fcmf.models.fusion import (
    FusionClassifier,
    GeometricRoIAttention,
    ImageGuidedAttention,
    ObjectRelation,
    fuse_and_classify,
    geometric_encoding,
    geometric_roi_attention,
    image_guided_attention,
    object_relation,
)
from fcmf.models.perception import (
    CategoryHeads,
    VisualBatch,
    VisualProjection,
    detect_image_categories,
    detect_roi_category,
    project_visual,
)

__all__ = [
    "Module",
    "TextEncoder",
    "encode_text",
    "FCMFModel",
    "CategoryHeads",
    "VisualBatch",
    "VisualProjection",
    "detect_image_categories",
    "detect_roi_category",
    "project_visual",
    "ObjectRelation",
    "ImageGuidedAttention",
    "GeometricRoIAttention",
    "FusionClassifier",
    "geometric_encoding",
    "object_relation",
    "image_guided_attention",
    "geometric_roi_attention",
    "fuse_and_classify",
]
