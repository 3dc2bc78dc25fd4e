"""FCMF network - text encoder, visual projection, relation/attention blocks and classifier"""

from __future__ import annotations

import numpy as np

from fcmf.models.base import Module
from fcmf.models.encoder import TextEncoder
from fcmf.models.fusion import FusionClassifier, GeometricRoIAttention, ImageGuidedAttention, ObjectRelation
from fcmf.models.perception import VisualBatch, VisualProjection
from fcmf.numerics import functional as F
from fcmf.numerics.tensor import Tensor, as_tensor
from fcmf.schemas.config import AblationFlags, ModelConfig


class FCMFModel(Module):
    """Scores (sample, aspect) queries against their sample's visual context

    Attributes:
        config: architecture hyperparameters
        ablation: component switches honoured in forward
    """

    def __init__(
        self,
        vocab_size: int,
        config: ModelConfig,
        rng: np.random.Generator,
        ablation: AblationFlags | None = None,
    ):
        super().__init__()
        self.config = config
        self.ablation = ablation or AblationFlags()
        self.encoder = TextEncoder(vocab_size, config, rng)
        self.projection = VisualProjection(config.feature_dim, config.hidden_size, rng)
        self.relation = ObjectRelation(config.hidden_size, config.heads, config.geometry_dim, config.dropout, rng)
        self.image_attention = ImageGuidedAttention(config, rng)
        self.roi_attention = GeometricRoIAttention(config, rng)
        self.fusion = FusionClassifier(config, rng)

    def __call__(self, token_ids: np.ndarray, visual: VisualBatch, sample_index: np.ndarray) -> Tensor:
        """Logits for M queries

        Args:
            token_ids: (M, N) auxiliary sequences, one per (sample, aspect)
            visual: padded inputs of the S distinct samples
            sample_index: (M,) row of `visual` each query belongs to

        Returns:
            (M, 4) logits over none/negative/neutral/positive
        """
        if self.ablation.no_visual_features:
            visual = visual.without_images()
        sample_index = np.asarray(sample_index, dtype=np.int64)

        h_t, text_mask = self.encoder(token_ids)
        v_i = self.projection.project_grids(as_tensor(visual.grids))
        v_r = self.projection.project_rois(as_tensor(visual.rois))
        h_o = self.relation(v_r, visual.boxes, visual.roi_mask, use_geometry=not self.ablation.no_geometric)

        h_s = h_t[:, 0]
        h_i = self.image_attention(h_s, v_i, visual.image_mask, sample_index)
        h_r = self.roi_attention(h_t, text_mask, h_o, visual.roi_mask, visual.image_mask, sample_index)
        return self.fusion(h_s, h_i, h_r, visual.image_mask[sample_index])

    def predict_proba(self, token_ids: np.ndarray, visual: VisualBatch, sample_index: np.ndarray) -> np.ndarray:
        return F.softmax(self(token_ids, visual, sample_index), axis=-1).data
