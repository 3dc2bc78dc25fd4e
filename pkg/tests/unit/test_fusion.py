"""Unit Tests for Fusion Blocks

Tests for:
- Box relation geometry and its sinusoidal embedding
- Object-relation attention among RoIs
- Image-guided and geometric RoI-aware attention
- Fusion head, masking and image-order invariance of the full model
"""

import math

import numpy as np
import pytest

from fcmf.exceptions import ConfigurationError
from fcmf.models.fcmf import FCMFModel
from fcmf.models.fusion import (
    EPSILON,
    FusionClassifier,
    GeometricRoIAttention,
    ImageGuidedAttention,
    ObjectRelation,
    box_relation_features,
    fuse_and_classify,
    geometric_encoding,
    geometric_roi_attention,
    image_guided_attention,
    object_relation,
    sinusoidal_embedding,
)
from fcmf.models.perception import VisualBatch
from fcmf.numerics import functional as F
from fcmf.numerics.tensor import Tensor
from fcmf.schemas.config import AblationFlags, ModelConfig

pytestmark = pytest.mark.unit

D = 8


def random_boxes(rng, shape):
    wh = rng.uniform(0.1, 0.4, size=shape + (2,))
    xy = rng.uniform(0.0, 1.0, size=shape + (2,)) * (1.0 - wh)
    return np.concatenate([xy, wh], axis=-1)


def random_visual(rng, config, n_samples, n_images, n_rois):
    """Random padded batch: n_images[s] real images with n_rois RoIs each"""
    s, k, j = n_samples, config.k_max, config.j_max
    image_mask = np.ones((s, k), dtype=bool)
    roi_mask = np.ones((s, k, j), dtype=bool)
    for i, count in enumerate(n_images):
        image_mask[i, :count] = False
        roi_mask[i, :count, :n_rois] = False
    grids = rng.normal(size=(s, k, config.grid_cells, config.feature_dim)) * ~image_mask[..., None, None]
    rois = rng.normal(size=(s, k, j, config.feature_dim)) * ~roi_mask[..., None]
    boxes = random_boxes(rng, (s, k, j)) * ~roi_mask[..., None]
    return VisualBatch(grids=grids, rois=rois, boxes=boxes, image_mask=image_mask, roi_mask=roi_mask)


def pad_slot(a, fill):
    """Append one image slot filled with `fill`"""
    return np.concatenate([a, np.full((a.shape[0], 1) + a.shape[2:], fill, dtype=a.dtype)], axis=1)


def random_ids(rng, m, n, vocab_size=20):
    ids = rng.integers(10, vocab_size, size=(m, n))
    ids[:, 0] = 1
    ids[:, n - 3 :] = 0
    return ids


def eval_model(config, seed=0, ablation=None):
    model = FCMFModel(20, config, np.random.default_rng(seed), ablation)
    model.eval()
    return model


def dense(module, x):
    return x @ module.weight.data.T + module.bias.data


def naive_softmax(scores):
    top = max(scores)
    exps = [math.exp(s - top) for s in scores]
    return [e / sum(exps) for e in exps]


def naive_attention(attention, query_row, rows):
    """One query over rows with a single head, output projection applied"""
    q = dense(attention.query, query_row)
    keys, values = dense(attention.key, rows), dense(attention.value, rows)
    weights = naive_softmax([float(q @ key) / math.sqrt(q.shape[-1]) for key in keys])
    return dense(attention.output, sum(w * v for w, v in zip(weights, values)))



class TestGeometry:
    """Test pairwise box features and their embedding"""

    def test_identical_boxes(self):
        boxes = np.array([[0.1, 0.2, 0.4, 0.5], [0.1, 0.2, 0.4, 0.5]])
        features = box_relation_features(boxes)
        expected = [math.log(EPSILON / 0.4), math.log(EPSILON / 0.5), 0.0, 0.0]
        assert np.allclose(features[0, 1], expected, rtol=0, atol=1e-12)
        assert np.allclose(features[1, 1], expected, rtol=0, atol=1e-12)

    def test_hand_pair(self):
        boxes = np.array([[0.0, 0.0, 0.2, 0.4], [0.5, 0.2, 0.4, 0.2]])
        features = box_relation_features(boxes)
        # centres (0.1, 0.2) and (0.7, 0.3)
        expected = [math.log(0.6 / 0.2), math.log(0.1 / 0.4), math.log(2.0), math.log(0.5)]
        assert np.allclose(features[0, 1], expected, rtol=0, atol=1e-12)

    def test_finite_for_valid_boxes(self, rng):
        assert np.all(np.isfinite(geometric_encoding(random_boxes(rng, (5,)), 16)))

    def test_embedding_shape_and_range(self, rng):
        embedded = sinusoidal_embedding(rng.normal(size=(3, 3, 4)), 16)
        assert embedded.shape == (3, 3, 16)
        assert np.all(np.abs(embedded) <= 1.0)

    def test_embedding_size_multiple_of_eight(self):
        with pytest.raises(ConfigurationError):
            sinusoidal_embedding(np.zeros(4), 12)


class TestObjectRelation:
    """Test relation attention among RoIs"""

    def test_single_roi(self, rng):
        block = ObjectRelation(D, 2, 8, 0.0, rng)
        block.eval()
        v = rng.normal(size=(1, D))
        out = object_relation(Tensor(v), random_boxes(rng, (1,)), np.zeros(1, dtype=bool), block)
        expected = v + block.value(Tensor(v)).data
        assert np.allclose(out.data, expected, rtol=0, atol=1e-12)

    def test_identical_rois_split_evenly(self, rng):
        block = ObjectRelation(D, 1, 8, 0.0, rng)
        block.eval()
        block.query.weight.data[...] = 0.0
        block.query.bias.data[...] = 0.0
        v = np.repeat(rng.normal(size=(1, D)), 2, axis=0)
        boxes = np.array([[0.2, 0.2, 0.3, 0.3], [0.2, 0.2, 0.3, 0.3]])
        _, weights = block(Tensor(v), boxes, np.zeros(2, dtype=bool), return_weights=True)
        assert np.allclose(weights.data, 0.5, rtol=0, atol=1e-12)

    def test_hand_set_geometry_weights(self, rng):
        block = ObjectRelation(D, 1, 8, 0.0, rng)
        block.eval()
        block.query.weight.data[...] = 0.0
        block.query.bias.data[...] = 0.0
        block.geometry.weight.data[...] = rng.normal(size=block.geometry.weight.shape)
        block.geometry.bias.data[...] = 0.3
        boxes = random_boxes(rng, (3,))
        _, weights = block(Tensor(rng.normal(size=(3, D))), boxes, np.zeros(3, dtype=bool), return_weights=True)

        encoded = geometric_encoding(boxes, 8)
        for i in range(3):
            logits = []
            for j in range(3):
                w_g = float(encoded[i, j] @ block.geometry.weight.data[0] + 0.3)
                logits.append(math.log(max(max(w_g, 0.0), 1e-6)))
            top = max(logits)
            expected = [math.exp(x - top) for x in logits]
            expected = [x / sum(expected) for x in expected]
            assert np.allclose(weights.data[0, i], expected, rtol=0, atol=1e-12)

    def test_weights_sum_to_one(self, rng):
        block = ObjectRelation(D, 2, 8, 0.0, rng)
        block.eval()
        mask = np.array([False, False, True, False])
        boxes = random_boxes(rng, (4,)) * ~mask[:, None]
        _, weights = block(Tensor(rng.normal(size=(4, D))), boxes, mask, return_weights=True)
        assert np.allclose(weights.data.sum(axis=-1), 1.0, rtol=0, atol=1e-9)
        assert np.all(weights.data[..., 2] == 0.0)

    def test_padded_rows_zero_and_finite(self, rng):
        block = ObjectRelation(D, 2, 8, 0.0, rng)
        block.eval()
        mask = np.array([False, True])
        boxes = np.array([[0.1, 0.1, 0.3, 0.3], [0.0, 0.0, 0.0, 0.0]])
        out = object_relation(Tensor(rng.normal(size=(2, D))), boxes, mask, block)
        assert np.all(np.isfinite(out.data))
        assert not out.data[1].any()

    def test_without_geometry_is_plain_attention(self, rng):
        block = ObjectRelation(D, 2, 8, 0.0, rng)
        block.eval()
        v = Tensor(rng.normal(size=(3, D)))
        far = np.array([[0.0, 0.0, 0.1, 0.1], [0.8, 0.8, 0.1, 0.1], [0.4, 0.0, 0.2, 0.5]])
        near = np.array([[0.0, 0.0, 0.1, 0.1], [0.05, 0.0, 0.1, 0.1], [0.0, 0.05, 0.1, 0.1]])
        mask = np.zeros(3, dtype=bool)
        a = object_relation(v, far, mask, block, use_geometry=False).data
        b = object_relation(v, near, mask, block, use_geometry=False).data
        assert np.array_equal(a, b)


class TestImageGuidedAttention:
    """Test CM-attention over image grids"""

    def test_constant_cells_give_projected_value(self, tiny_model_config, rng):
        block = ImageGuidedAttention(tiny_model_config, rng)
        block.eval()
        u = rng.normal(size=D)
        grids = np.broadcast_to(u, (tiny_model_config.k_max, 5, D)).copy()
        mask = np.zeros(tiny_model_config.k_max, dtype=bool)
        out = image_guided_attention(Tensor(rng.normal(size=(6, D))), Tensor(grids), mask, block)
        attention = block.attention
        expected = attention.output(attention.value(Tensor(u[None, :]))).data[0]
        for k in range(tiny_model_config.k_max):
            assert np.allclose(out.data[k], expected, rtol=0, atol=1e-12)

    def test_masked_rows(self, tiny_model_config, rng):
        config = tiny_model_config.model_copy(update={"k_max": 7})
        block = ImageGuidedAttention(config, rng)
        block.eval()
        mask = np.array([False, False, False, True, True, True, True])
        grids = rng.normal(size=(7, 4, D)) * ~mask[:, None, None]
        out = image_guided_attention(Tensor(rng.normal(size=(5, D))), Tensor(grids), mask, block)
        assert out.shape == (7, D)
        assert not out.data[3:].any()
        assert np.all(np.abs(out.data[:3]).sum(axis=-1) > 0)

    def test_separate_blocks_per_slot(self, tiny_model_config, rng):
        config = tiny_model_config.model_copy(update={"share_cm_attention": False})
        block = ImageGuidedAttention(config, rng)
        assert len(block.slots) == config.k_max
        assert len(block.named_parameters()) == config.k_max * 8

    def test_matches_naive_single_head(self, rng):
        config = ModelConfig(hidden_size=4, heads=1, geometry_dim=8, k_max=1, dropout=0.0)
        block = ImageGuidedAttention(config, rng)
        block.eval()
        h_t = rng.normal(size=(3, 4))
        cells = rng.normal(size=(1, 2, 4))
        out = image_guided_attention(Tensor(h_t), Tensor(cells), np.zeros(1, dtype=bool), block).data[0]
        assert np.allclose(out, naive_attention(block.attention, h_t[0], cells[0]), rtol=0, atol=1e-12)


class TestGeometricRoIAttention:
    """Test MM-attention over text and relation outputs"""

    def test_all_rois_masked_reduces_to_text(self, tiny_model_config, rng):
        block = GeometricRoIAttention(tiny_model_config, rng)
        block.eval()
        k, j = tiny_model_config.k_max, tiny_model_config.j_max
        h_t = Tensor(rng.normal(size=(6, D)))
        text_mask = np.array([False] * 4 + [True] * 2)
        out = geometric_roi_attention(
            h_t, text_mask, Tensor(rng.normal(size=(k, j, D))), np.ones((k, j), dtype=bool), np.zeros(k, dtype=bool), block
        )
        expected = block.attention(h_t[:1], h_t, h_t, mask=text_mask).data[0]
        assert np.all(np.isfinite(out.data))
        for row in range(k):
            assert np.allclose(out.data[row], expected, rtol=0, atol=1e-12)

    def test_shape_and_masked_rows(self, tiny_model_config, rng):
        block = GeometricRoIAttention(tiny_model_config, rng)
        block.eval()
        k, j = tiny_model_config.k_max, tiny_model_config.j_max
        image_mask = np.array([False] + [True] * (k - 1))
        roi_mask = np.ones((k, j), dtype=bool)
        roi_mask[0, 0] = False
        out = geometric_roi_attention(
            Tensor(rng.normal(size=(5, D))), np.zeros(5, dtype=bool), Tensor(rng.normal(size=(k, j, D))), roi_mask, image_mask, block
        )
        assert out.shape == (k, D)
        assert not out.data[1:].any()

    def test_matches_naive_with_geometry(self, rng):
        config = ModelConfig(hidden_size=4, heads=1, geometry_dim=8, k_max=1, j_max=2, dropout=0.0)
        relation = ObjectRelation(4, 1, 8, 0.0, rng)
        block = GeometricRoIAttention(config, rng)
        relation.eval()
        block.eval()
        relation.geometry.bias.data[...] = 0.2
        h_t = rng.normal(size=(3, 4))
        v_r = rng.normal(size=(2, 4))
        boxes = np.array([[0.1, 0.2, 0.3, 0.2], [0.5, 0.4, 0.2, 0.4]])
        roi_mask = np.zeros(2, dtype=bool)
        h_o = object_relation(Tensor(v_r), boxes, roi_mask, relation)
        out = geometric_roi_attention(
            Tensor(h_t), np.zeros(3, dtype=bool), F.reshape(h_o, (1, 2, 4)), roi_mask[None], np.zeros(1, dtype=bool), block
        )

        centres = boxes[:, :2] + boxes[:, 2:] / 2
        q, k, v = dense(relation.query, v_r), dense(relation.key, v_r), dense(relation.value, v_r)
        expected_o = []
        for i in range(2):
            w_i, h_i = boxes[i, 2], boxes[i, 3]
            logits = []
            for j in range(2):
                features = [
                    math.log(max(abs(centres[i, 0] - centres[j, 0]), EPSILON) / w_i),
                    math.log(max(abs(centres[i, 1] - centres[j, 1]), EPSILON) / h_i),
                    math.log(boxes[j, 2] / w_i),
                    math.log(boxes[j, 3] / h_i),
                ]
                # one frequency per coordinate at geometry size 8
                embedded = [fn(100.0 * x) for x in features for fn in (math.sin, math.cos)]
                w_g = float(relation.geometry.weight.data[0] @ np.array(embedded)) + 0.2
                logits.append(float(q[i] @ k[j]) / 2.0 + math.log(max(w_g, 0.0, 1e-6)))
            weights = naive_softmax(logits)
            expected_o.append(v_r[i] + weights[0] * v[0] + weights[1] * v[1])
        expected_o = np.array(expected_o)

        assert np.allclose(h_o.data, expected_o, rtol=0, atol=1e-12)
        expected = naive_attention(block.attention, h_t[0], np.concatenate([h_t, expected_o]))
        assert np.allclose(out.data[0], expected, rtol=0, atol=1e-12)



class TestFuseAndClassify:
    """Test the fusion head"""

    def test_distribution(self, tiny_model_config, rng):
        block = FusionClassifier(tiny_model_config, rng)
        block.eval()
        k = tiny_model_config.k_max
        probs = fuse_and_classify(
            Tensor(rng.normal(size=D)), Tensor(rng.normal(size=(k, D))), Tensor(rng.normal(size=(k, D))), np.zeros(k, dtype=bool), block
        )
        assert probs.shape == (4,)
        assert abs(probs.data.sum() - 1.0) < 1e-9

    def test_all_images_masked_depends_only_on_text(self, tiny_model_config, rng):
        block = FusionClassifier(tiny_model_config, rng)
        block.eval()
        k = tiny_model_config.k_max
        h_s = Tensor(rng.normal(size=D))
        mask = np.ones(k, dtype=bool)
        a = fuse_and_classify(h_s, Tensor(rng.normal(size=(k, D))), Tensor(rng.normal(size=(k, D))), mask, block)
        b = fuse_and_classify(h_s, Tensor(np.zeros((k, D))), Tensor(np.zeros((k, D))), mask, block)
        assert np.allclose(a.data, b.data, rtol=0, atol=1e-12)

    def test_single_image_single_roi_matches_naive(self, rng):
        config = ModelConfig(hidden_size=4, heads=1, geometry_dim=8, k_max=1, j_max=1, dropout=0.0)
        cm = ImageGuidedAttention(config, rng)
        relation = ObjectRelation(4, 1, 8, 0.0, rng)
        roi = GeometricRoIAttention(config, rng)
        head = FusionClassifier(config, rng)
        for block in (cm, relation, roi, head):
            block.eval()
        h_t = rng.normal(size=(3, 4))
        cells = rng.normal(size=(1, 2, 4))
        v_r = rng.normal(size=(1, 4))
        present = np.zeros(1, dtype=bool)

        h_i = image_guided_attention(Tensor(h_t), Tensor(cells), present, cm)
        h_o = object_relation(Tensor(v_r), np.array([[0.2, 0.3, 0.4, 0.2]]), present, relation)
        h_r = geometric_roi_attention(
            Tensor(h_t), np.zeros(3, dtype=bool), F.reshape(h_o, (1, 1, 4)), present[None], present, roi
        )
        h_s = Tensor(h_t[0])
        logits = head(F.reshape(h_s, (1, 4)), F.reshape(h_i, (1, 1, 4)), F.reshape(h_r, (1, 1, 4)), present[None])
        probs = fuse_and_classify(h_s, h_i, h_r, present, head)

        expected_i = naive_attention(cm.attention, h_t[0], cells[0])
        # a lone RoI attends only to itself
        expected_o = v_r[0] + dense(relation.value, v_r[0])
        expected_r = naive_attention(roi.attention, h_t[0], np.vstack([h_t, expected_o]))
        h0 = naive_attention(head.attention, h_t[0], np.stack([h_t[0], expected_i, expected_r]))
        expected_logits = dense(head.classifier, h0)
        assert np.allclose(logits.data[0], expected_logits, rtol=0, atol=1e-12)
        assert np.allclose(probs.data, naive_softmax(list(expected_logits)), rtol=0, atol=1e-12)



class TestModelInvariances:
    """Test masking and image-order invariance of the full forward"""

    def test_extra_padded_slots_change_nothing(self, tiny_model_config, rng):
        small = tiny_model_config.model_copy(update={"k_max": 2, "j_max": 2})
        large = tiny_model_config.model_copy(update={"k_max": 3, "j_max": 2})
        visual_small = random_visual(rng, small, 2, [2, 1], 1)
        visual_large = VisualBatch(
            grids=pad_slot(visual_small.grids, 0.0),
            rois=pad_slot(visual_small.rois, 0.0),
            boxes=pad_slot(visual_small.boxes, 0.0),
            image_mask=pad_slot(visual_small.image_mask, True),
            roi_mask=pad_slot(visual_small.roi_mask, True),
        )
        ids = random_ids(rng, 12, small.max_len)
        index = np.repeat(np.arange(2), 6)
        a = eval_model(small).predict_proba(ids, visual_small, index)
        b = eval_model(large).predict_proba(ids, visual_large, index)
        assert np.allclose(a, b, rtol=0, atol=1e-12)

    def test_extra_padded_rois_change_nothing(self, tiny_model_config, rng):
        narrow = tiny_model_config.model_copy(update={"j_max": 1})
        wide = tiny_model_config.model_copy(update={"j_max": 3})
        visual = random_visual(rng, narrow, 1, [2], 1)
        extra = ((0, 0), (0, 0), (0, 2), (0, 0))
        padded = VisualBatch(
            grids=visual.grids,
            rois=np.pad(visual.rois, extra),
            boxes=np.pad(visual.boxes, extra),
            image_mask=visual.image_mask,
            roi_mask=np.pad(visual.roi_mask, extra[:3], constant_values=True),
        )
        ids = random_ids(rng, 6, narrow.max_len)
        index = np.zeros(6, dtype=np.int64)
        a = eval_model(narrow).predict_proba(ids, visual, index)
        b = eval_model(wide).predict_proba(ids, padded, index)
        assert np.allclose(a, b, rtol=0, atol=1e-12)

    def test_image_permutation_invariance(self, tiny_model_config, rng):
        visual = random_visual(rng, tiny_model_config, 1, [3], 2)
        order = [2, 0, 1]
        permuted = VisualBatch(
            grids=visual.grids[:, order],
            rois=visual.rois[:, order],
            boxes=visual.boxes[:, order],
            image_mask=visual.image_mask[:, order],
            roi_mask=visual.roi_mask[:, order],
        )
        model = eval_model(tiny_model_config)
        ids = random_ids(rng, 6, tiny_model_config.max_len)
        index = np.zeros(6, dtype=np.int64)
        a = model.predict_proba(ids, visual, index)
        b = model.predict_proba(ids, permuted, index)
        assert np.allclose(a, b, rtol=0, atol=1e-9)

    def test_distributions_valid(self, tiny_model_config, rng):
        model = eval_model(tiny_model_config)
        visual = random_visual(rng, tiny_model_config, 2, [3, 0], 2)
        probs = model.predict_proba(random_ids(rng, 12, tiny_model_config.max_len), visual, np.repeat(np.arange(2), 6))
        assert probs.shape == (12, 4)
        assert np.allclose(probs.sum(axis=-1), 1.0, rtol=0, atol=1e-9)

    def test_no_visual_features_ignores_images(self, tiny_model_config, rng):
        model = eval_model(tiny_model_config, ablation=AblationFlags(no_visual_features=True))
        ids = random_ids(rng, 6, tiny_model_config.max_len)
        index = np.zeros(6, dtype=np.int64)
        a = model.predict_proba(ids, random_visual(rng, tiny_model_config, 1, [3], 2), index)
        b = model.predict_proba(ids, random_visual(rng, tiny_model_config, 1, [1], 1), index)
        assert np.array_equal(a, b)

    def test_gradients_reach_every_parameter(self, tiny_model_config, rng):
        model = FCMFModel(20, tiny_model_config, np.random.default_rng(0))
        model.eval()
        visual = random_visual(rng, tiny_model_config, 1, [2], 2)
        logits = model(random_ids(rng, 6, tiny_model_config.max_len), visual, np.zeros(6, dtype=np.int64))
        F.sum(F.mul(logits, rng.normal(size=logits.shape))).backward()
        missing = [name for name, p in model.named_parameters().items() if p.grad is None]
        assert missing == []
