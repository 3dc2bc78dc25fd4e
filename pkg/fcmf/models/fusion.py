"""Fusion - image-guided attention, geometric RoI attention and the sentiment head

Shapes used throughout:
    S samples, M = S x 6 (sample, aspect) queries, N sequence length,
    K image slots, C grid cells, J RoI slots, d hidden size, h heads.

Every block evaluates only the first query row, which is all the
first-token representation depends on.
"""

from __future__ import annotations

import numpy as np

from fcmf.exceptions import ConfigurationError
from fcmf.models.base import Module
from fcmf.models.layers import Dropout, Linear, MultiHeadAttention
from fcmf.numerics import functional as F
from fcmf.numerics.attention import scaled_dot_attention
from fcmf.numerics.tensor import Tensor, as_tensor
from fcmf.schemas.config import ModelConfig
from fcmf.schemas.sample import SENTIMENTS

EPSILON = 1e-3
WAVE_LENGTH = 1000.0
SCALE = 100.0
MIN_GEOMETRIC_WEIGHT = 1e-6
UNIT_BOX = np.array([0.0, 0.0, 1.0, 1.0])


# Geometry


def box_relation_features(boxes: np.ndarray) -> np.ndarray:
    """Pairwise relative geometry of (x, y, w, h) boxes

    Args:
        boxes: (..., J, 4), w and h > 0

    Returns:
        (..., J, J, 4): for row i, column j
        (log(max(|cx_i - cx_j|, eps) / w_i), log(max(|cy_i - cy_j|, eps) / h_i), log(w_j / w_i), log(h_j / h_i))
        using box centres cx, cy
    """
    boxes = np.asarray(boxes, dtype=np.float64)
    x, y, w, h = (boxes[..., c] for c in range(4))
    cx, cy = x + 0.5 * w, y + 0.5 * h
    dx = np.maximum(np.abs(cx[..., :, None] - cx[..., None, :]), EPSILON) / w[..., :, None]
    dy = np.maximum(np.abs(cy[..., :, None] - cy[..., None, :]), EPSILON) / h[..., :, None]
    dw = w[..., None, :] / w[..., :, None]
    dh = h[..., None, :] / h[..., :, None]
    return np.log(np.stack([dx, dy, dw, dh], axis=-1))


def sinusoidal_embedding(features: np.ndarray, size: int) -> np.ndarray:
    """(..., 4) -> (..., size): sin/cos of each coordinate at size/8 frequencies"""
    if size % 8 != 0:
        raise ConfigurationError(f"embedding size {size} must be a multiple of 8")
    n_freq = size // 8
    dim_mat = WAVE_LENGTH ** (np.arange(n_freq) / n_freq)
    position = SCALE * np.asarray(features)[..., None] / dim_mat
    embedded = np.concatenate([np.sin(position), np.cos(position)], axis=-1)
    return embedded.reshape(*embedded.shape[:-2], size)


def geometric_encoding(boxes: np.ndarray, size: int) -> np.ndarray:
    """(..., J, 4) boxes -> (..., J, J, size) embedded pairwise geometry"""
    return sinusoidal_embedding(box_relation_features(boxes), size)


def _keep(mask: np.ndarray) -> np.ndarray:
    """1.0 for real slots, 0.0 for padded ones, with a trailing feature axis"""
    return (~np.asarray(mask, dtype=bool)).astype(np.float64)[..., None]


# Blocks


class ObjectRelation(Module):
    """Relation attention among one image's RoIs

    logits_ij = q_i·k_j / sqrt(d/h) + log(max(relu(W_G · geometry_ij), 1e-6)),
    output = v_R + attention, with padded rows zeroed.
    """

    def __init__(self, hidden_size: int, heads: int, geometry_dim: int, dropout: float, rng: np.random.Generator):
        super().__init__()
        self.heads = heads
        self.geometry_dim = geometry_dim
        self.query = Linear(hidden_size, hidden_size, rng)
        self.key = Linear(hidden_size, hidden_size, rng)
        self.value = Linear(hidden_size, hidden_size, rng)
        self.geometry = Linear(geometry_dim, heads, rng)
        # geometric weights start near 1 so log-weights start near 0
        self.geometry.bias.data[...] = 1.0
        self.dropout = Dropout(dropout)

    def geometric_bias(self, boxes: np.ndarray, roi_mask: np.ndarray) -> Tensor:
        """(..., J, 4) -> (..., h, J, J) additive log-weights"""
        safe = np.where(np.asarray(roi_mask, dtype=bool)[..., None], UNIT_BOX, boxes)
        weights = F.relu(self.geometry(as_tensor(geometric_encoding(safe, self.geometry_dim))))
        log_weights = F.log(F.clamp_min(weights, MIN_GEOMETRIC_WEIGHT))
        # (..., i, j, h) -> (..., h, i, j)
        return F.swapaxes(F.swapaxes(log_weights, -1, -3), -1, -2)

    def __call__(
        self,
        v_r: Tensor,
        boxes: np.ndarray,
        roi_mask: np.ndarray,
        use_geometry: bool = True,
        return_weights: bool = False,
    ) -> Tensor | tuple[Tensor, Tensor]:
        """
        Args:
            v_r: (..., J, d) projected RoI features
            boxes: (..., J, 4)
            roi_mask: (..., J), True at padded slots
        """
        bias = self.geometric_bias(boxes, roi_mask) if use_geometry else None
        attended, weights = scaled_dot_attention(
            self.query(v_r),
            self.key(v_r),
            self.value(v_r),
            mask=roi_mask,
            heads=self.heads,
            bias=bias,
            return_weights=True,
        )
        out = F.mul(F.add(v_r, self.dropout(attended)), _keep(roi_mask))
        return (out, weights) if return_weights else out


class ImageGuidedAttention(Module):
    """CM-attention: the first text state attends over each image's grid cells"""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.shared = config.share_cm_attention
        if self.shared:
            self.attention = MultiHeadAttention(config.hidden_size, config.heads, config.dropout, rng)
        else:
            self.slots = [
                MultiHeadAttention(config.hidden_size, config.heads, config.dropout, rng) for _ in range(config.k_max)
            ]

    def _blocks(self, k: int) -> list[MultiHeadAttention]:
        return [self.attention] * k if self.shared else self.slots[:k]

    def __call__(self, first: Tensor, grids: Tensor, image_mask: np.ndarray, sample_index: np.ndarray) -> Tensor:
        """
        Args:
            first: (M, d) first-token text states
            grids: (S, K, C, d) projected image grids
            image_mask: (S, K), True at padded image slots
            sample_index: (M,) sample row of each query

        Returns:
            (M, K, d) with padded image rows zero
        """
        m, d = first.shape
        k_slots = grids.shape[1]
        rows = []
        for k, block in enumerate(self._blocks(k_slots)):
            cells = grids[:, k]
            keys = F.take(block.key(cells), sample_index, axis=0)
            values = F.take(block.value(cells), sample_index, axis=0)
            query = F.reshape(block.query(first), (m, 1, d))
            rows.append(F.reshape(block.attend(query, keys, values), (m, d)))
        out = F.stack(rows, axis=1)
        return F.mul(out, _keep(np.asarray(image_mask)[sample_index]))


class GeometricRoIAttention(Module):
    """MM-attention over H_T ⊕ H_O per image, first row kept"""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.attention = MultiHeadAttention(config.hidden_size, config.heads, config.dropout, rng)

    def __call__(
        self,
        h_t: Tensor,
        text_mask: np.ndarray,
        h_o: Tensor,
        roi_mask: np.ndarray,
        image_mask: np.ndarray,
        sample_index: np.ndarray,
    ) -> Tensor:
        """
        Args:
            h_t: (M, N, d) text states
            text_mask: (M, N), True at pad positions
            h_o: (S, K, J, d) object-relation outputs
            roi_mask: (S, K, J)
            image_mask: (S, K)
            sample_index: (M,)

        Returns:
            (M, K, d) with padded image rows zero
        """
        m, n, d = h_t.shape
        _, k_slots, j_slots, _ = h_o.shape
        block = self.attention
        query = F.reshape(block.query(h_t[:, :1]), (m, 1, 1, d))
        # text keys/values are shared by every image slot: project once, broadcast
        text_keys = F.broadcast_to(F.reshape(block.key(h_t), (m, 1, n, d)), (m, k_slots, n, d))
        text_values = F.broadcast_to(F.reshape(block.value(h_t), (m, 1, n, d)), (m, k_slots, n, d))
        object_keys = F.take(block.key(h_o), sample_index, axis=0)
        object_values = F.take(block.value(h_o), sample_index, axis=0)
        keys = F.concat([text_keys, object_keys], axis=2)
        values = F.concat([text_values, object_values], axis=2)
        mask = np.concatenate(
            [
                np.broadcast_to(np.asarray(text_mask, dtype=bool)[:, None, :], (m, k_slots, n)),
                np.asarray(roi_mask, dtype=bool)[sample_index],
            ],
            axis=-1,
        )
        out = F.reshape(block.attend(query, keys, values, mask=mask), (m, k_slots, d))
        return F.mul(out, _keep(np.asarray(image_mask)[sample_index]))


class FusionClassifier(Module):
    """MM-attention over H^M = [H_<s>; H_I; H_R] (no position embeddings), then W^T·H^0 + b"""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.attention = MultiHeadAttention(config.hidden_size, config.heads, config.dropout, rng)
        self.classifier = Linear(config.hidden_size, len(SENTIMENTS), rng)

    def __call__(self, h_s: Tensor, h_i: Tensor, h_r: Tensor, image_mask: np.ndarray) -> Tensor:
        """
        Args:
            h_s: (M, d)
            h_i, h_r: (M, K, d)
            image_mask: (M, K)

        Returns:
            (M, 4) logits over none/negative/neutral/positive
        """
        m, d = h_s.shape
        first = F.reshape(h_s, (m, 1, d))
        fused = F.concat([first, h_i, h_r], axis=1)
        image_mask = np.asarray(image_mask, dtype=bool)
        mask = np.concatenate([np.zeros((m, 1), dtype=bool), image_mask, image_mask], axis=1)
        h0 = F.reshape(self.attention(first, fused, fused, mask=mask), (m, d))
        return self.classifier(h0)


# Single-sample operations


def image_guided_attention(
    h_t: Tensor, grids: Tensor, image_mask: np.ndarray, block: ImageGuidedAttention
) -> Tensor:
    """H_I (K, d) for one sequence: h_t (N, d), grids (K, C, d), image_mask (K,)"""
    grids = as_tensor(grids)
    out = block(F.reshape(as_tensor(h_t)[0], (1, -1)), F.reshape(grids, (1, *grids.shape)), np.asarray(image_mask)[None], np.zeros(1, dtype=np.int64))
    return out[0]


def object_relation(
    v_r: Tensor, boxes: np.ndarray, roi_mask: np.ndarray, block: ObjectRelation, use_geometry: bool = True
) -> Tensor:
    """H_O (J, d) for one image"""
    return block(as_tensor(v_r), boxes, roi_mask, use_geometry=use_geometry)


def geometric_roi_attention(
    h_t: Tensor,
    text_mask: np.ndarray,
    h_o: Tensor,
    roi_mask: np.ndarray,
    image_mask: np.ndarray,
    block: GeometricRoIAttention,
) -> Tensor:
    """H_R (K, d) for one sequence: h_t (N, d), h_o (K, J, d)"""
    h_t, h_o = as_tensor(h_t), as_tensor(h_o)
    out = block(
        F.reshape(h_t, (1, *h_t.shape)),
        np.asarray(text_mask)[None],
        F.reshape(h_o, (1, *h_o.shape)),
        np.asarray(roi_mask)[None],
        np.asarray(image_mask)[None],
        np.zeros(1, dtype=np.int64),
    )
    return out[0]


def fuse_and_classify(h_s: Tensor, h_i: Tensor, h_r: Tensor, image_mask: np.ndarray, block: FusionClassifier) -> Tensor:
    """4-way distribution for one (sample, aspect) query"""
    h_s, h_i, h_r = as_tensor(h_s), as_tensor(h_i), as_tensor(h_r)
    logits = block(
        F.reshape(h_s, (1, -1)),
        F.reshape(h_i, (1, *h_i.shape)),
        F.reshape(h_r, (1, *h_r.shape)),
        np.asarray(image_mask)[None],
    )
    return F.softmax(logits, axis=-1)[0]
