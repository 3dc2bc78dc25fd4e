"""Perception - image/RoI category heads and the learnable visual projection"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fcmf.exceptions import ConfigurationError, DimensionError
from fcmf.models.base import Module
from fcmf.models.layers import Linear
from fcmf.numerics import functional as F
from fcmf.numerics.tensor import Tensor, as_tensor, no_grad
from fcmf.schemas.sample import ASPECTS, AspectCategory

DEFAULT_THRESHOLD = 0.5


class CategoryHeads(Module):
    """Image head: multi-label sigmoid over 6 aspects from the mean-pooled grid.
    RoI head: 6-way softmax over the RoI feature vector.
    """

    def __init__(self, feature_dim: int, rng: np.random.Generator, grid_cells: int = 49):
        super().__init__()
        self.feature_dim = feature_dim
        self.grid_cells = grid_cells
        self.image_head = Linear(feature_dim, len(ASPECTS), rng)
        self.roi_head = Linear(feature_dim, len(ASPECTS), rng)

    def image_logits(self, grids: Tensor) -> Tensor:
        """(..., cells, F) -> (..., 6)"""
        return self.image_head(F.mean_pool(grids, axis=-2))

    def roi_logits(self, rois: Tensor) -> Tensor:
        """(..., F) -> (..., 6)"""
        return self.roi_head(rois)


def detect_image_categories(grid_features: np.ndarray, heads: CategoryHeads) -> np.ndarray:
    """Six independent aspect probabilities for one image grid

    Raises:
        DimensionError: grid is not (grid_cells, feature_dim)
    """
    grid = np.asarray(grid_features, dtype=np.float64)
    expected = (heads.grid_cells, heads.feature_dim)
    if grid.shape != expected:
        raise DimensionError(f"image grid has shape {grid.shape}, expected {expected}")
    with no_grad():
        return F.sigmoid(heads.image_logits(as_tensor(grid))).data


def categories_from_probabilities(probs: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> frozenset[AspectCategory]:
    return frozenset(a for a, p in zip(ASPECTS, probs) if p >= threshold)


def detect_roi_category(roi_features: np.ndarray, heads: CategoryHeads) -> np.ndarray:
    """6-way distribution for one RoI vector; argmax is the predicted category"""
    roi = np.asarray(roi_features, dtype=np.float64)
    if roi.shape != (heads.feature_dim,):
        raise DimensionError(f"RoI feature has shape {roi.shape}, expected ({heads.feature_dim},)")
    with no_grad():
        return F.softmax(heads.roi_logits(as_tensor(roi)), axis=-1).data


class VisualProjection(Module):
    """W_I and W_R: feature_dim -> hidden_size, no bias so the map stays linear"""

    def __init__(self, feature_dim: int, hidden_size: int, rng: np.random.Generator):
        super().__init__()
        self.feature_dim = feature_dim
        self.hidden_size = hidden_size
        self.image = Linear(feature_dim, hidden_size, rng, bias=False)
        self.roi = Linear(feature_dim, hidden_size, rng, bias=False)

    def project_grids(self, grids: Tensor) -> Tensor:
        """(..., cells, F) -> (..., cells, d)"""
        return self.image(grids)

    def project_rois(self, rois: Tensor) -> Tensor:
        """(..., F) -> (..., d)"""
        return self.roi(rois)


def project_visual(features: Tensor | np.ndarray, projection: VisualProjection, hidden_size: int | None = None) -> Tensor:
    """Column-layout projection: a (cells, F) grid gives W_I · gridᵀ of shape (d, cells); an (F,) RoI gives W_R · roi

    Args:
        features: one grid (2-d) or one RoI vector (1-d)
        projection: learnable W_I / W_R
        hidden_size: model width the caller expects; checked against the projection

    Raises:
        ConfigurationError: hidden_size differs from the projection's output size
        DimensionError: feature size differs from the projection's input size
    """
    if hidden_size is not None and hidden_size != projection.hidden_size:
        raise ConfigurationError(f"projection outputs {projection.hidden_size} dims, model expects {hidden_size}")
    x = as_tensor(features)
    if x.shape[-1] != projection.feature_dim:
        raise DimensionError(f"visual feature size {x.shape[-1]} does not match projection input {projection.feature_dim}")
    if x.ndim == 1:
        return projection.project_rois(x)
    if x.ndim == 2:
        return F.transpose(projection.project_grids(x))
    raise DimensionError(f"project_visual expects a grid or a RoI vector, got shape {x.shape}")


@dataclass(frozen=True)
class VisualBatch:
    """Raw visual inputs for S samples, padded to K image slots and J RoI slots

    Attributes:
        grids: (S, K, C, F) grid features, zero at padded images
        rois: (S, K, J, F) RoI features, zero at padded RoIs
        boxes: (S, K, J, 4) normalised (x, y, w, h), zero at padded RoIs
        image_mask: (S, K) True at padded image slots
        roi_mask: (S, K, J) True at padded RoI slots
    """

    grids: np.ndarray
    rois: np.ndarray
    boxes: np.ndarray
    image_mask: np.ndarray
    roi_mask: np.ndarray

    @property
    def size(self) -> int:
        return self.grids.shape[0]

    @classmethod
    def stack(cls, batches: list[VisualBatch]) -> VisualBatch:
        """Concatenate single-sample batches along the sample axis"""
        return cls(
            grids=np.concatenate([b.grids for b in batches]),
            rois=np.concatenate([b.rois for b in batches]),
            boxes=np.concatenate([b.boxes for b in batches]),
            image_mask=np.concatenate([b.image_mask for b in batches]),
            roi_mask=np.concatenate([b.roi_mask for b in batches]),
        )

    def without_images(self) -> VisualBatch:
        """Every image slot masked (the no-visual-features ablation)"""
        return VisualBatch(
            grids=np.zeros_like(self.grids),
            rois=np.zeros_like(self.rois),
            boxes=np.zeros_like(self.boxes),
            image_mask=np.ones_like(self.image_mask, dtype=bool),
            roi_mask=np.ones_like(self.roi_mask, dtype=bool),
        )
