"""Unit Tests for Category Heads, Visual Projection and the Image Pipeline"""

import numpy as np
import pytest

from fcmf.exceptions import ConfigurationError, DataError, DimensionError, FeatureIOError
from fcmf.models.perception import (
    CategoryHeads,
    VisualProjection,
    categories_from_probabilities,
    detect_image_categories,
    detect_roi_category,
    project_visual,
)
from fcmf.numerics import functional as F
from fcmf.schemas.sample import ASPECTS, AspectCategory, ImageEntry, MultimodalSample, RoI
from fcmf.services.dataset_service import FeatureStore
from fcmf.services.pipeline_service import run_image_pipeline
from fcmf.utils import fcmt
from tests.fixtures import TINY_FEATURE_DIM, TINY_GRID_CELLS

pytestmark = pytest.mark.unit


@pytest.fixture
def heads():
    return CategoryHeads(TINY_FEATURE_DIM, np.random.default_rng(0), grid_cells=TINY_GRID_CELLS)


def zero_heads():
    heads = CategoryHeads(TINY_FEATURE_DIM, np.random.default_rng(0), grid_cells=TINY_GRID_CELLS)
    for p in heads.named_parameters().values():
        p.data[...] = 0.0
    return heads


def write_image(root, name, rng, n_rois, categories=None, roi_categories=None):
    grid_ref = f"features/{name}.fcmt"
    fcmt.save(root / grid_ref, rng.normal(size=(TINY_GRID_CELLS, TINY_FEATURE_DIM)))
    rois = []
    for j in range(n_rois):
        ref = f"features/{name}_roi{j}.fcmt"
        fcmt.save(root / ref, rng.normal(size=TINY_FEATURE_DIM))
        category = roi_categories[j] if roi_categories else None
        rois.append(RoI(feature_ref=ref, box=(0.1 * j, 0.1, 0.2, 0.3), category=category))
    return ImageEntry(feature_ref=grid_ref, categories=categories, rois=tuple(rois))


class TestCategoryHeads:
    """Test image and RoI category detection"""

    def test_zero_image_head_gives_half(self, rng):
        probs = detect_image_categories(rng.normal(size=(TINY_GRID_CELLS, TINY_FEATURE_DIM)), zero_heads())
        assert probs.tolist() == [0.5] * 6
        assert categories_from_probabilities(probs) == frozenset(ASPECTS)

    def test_zero_roi_head_is_uniform(self, rng):
        probs = detect_roi_category(rng.normal(size=TINY_FEATURE_DIM), zero_heads())
        assert np.allclose(probs, 1 / 6, rtol=0, atol=1e-15)

    def test_roi_distribution_sums_to_one(self, heads, rng):
        for _ in range(20):
            probs = detect_roi_category(rng.normal(scale=5.0, size=TINY_FEATURE_DIM), heads)
            assert abs(probs.sum() - 1.0) < 1e-9

    def test_image_probabilities_independent(self, heads, rng):
        probs = detect_image_categories(rng.normal(size=(TINY_GRID_CELLS, TINY_FEATURE_DIM)), heads)
        assert probs.shape == (6,)
        assert np.all((probs > 0) & (probs < 1))

    def test_wrong_grid_shape(self, heads):
        with pytest.raises(DimensionError, match="grid"):
            detect_image_categories(np.zeros((TINY_GRID_CELLS + 1, TINY_FEATURE_DIM)), heads)

    def test_wrong_roi_shape(self, heads):
        with pytest.raises(DimensionError):
            detect_roi_category(np.zeros(TINY_FEATURE_DIM + 1), heads)

    def test_threshold(self):
        probs = np.array([0.9, 0.1, 0.5, 0.49, 0.0, 1.0])
        expected = {AspectCategory.LOCATION, AspectCategory.ROOM, AspectCategory.PUBLIC_AREA}
        assert categories_from_probabilities(probs) == expected


class TestProjectVisual:
    """Test the learnable visual projection"""

    def test_identity_weights(self, rng):
        projection = VisualProjection(TINY_FEATURE_DIM, TINY_FEATURE_DIM, rng)
        projection.image.weight.data[...] = np.eye(TINY_FEATURE_DIM)
        projection.roi.weight.data[...] = np.eye(TINY_FEATURE_DIM)
        grid = rng.normal(size=(TINY_GRID_CELLS, TINY_FEATURE_DIM))
        roi = rng.normal(size=TINY_FEATURE_DIM)
        assert np.array_equal(project_visual(grid, projection).data, grid.T)
        assert np.array_equal(project_visual(roi, projection).data, roi)

    def test_grid_shape(self, rng):
        projection = VisualProjection(TINY_FEATURE_DIM, 6, rng)
        out = project_visual(rng.normal(size=(TINY_GRID_CELLS, TINY_FEATURE_DIM)), projection)
        assert out.shape == (6, TINY_GRID_CELLS)

    def test_matches_matmul(self, rng):
        projection = VisualProjection(TINY_FEATURE_DIM, 6, rng)
        grid = rng.normal(size=(TINY_GRID_CELLS, TINY_FEATURE_DIM))
        expected = projection.image.weight.data @ grid.T
        assert np.allclose(project_visual(grid, projection).data, expected, rtol=0, atol=1e-12)

    def test_linear(self, rng):
        projection = VisualProjection(TINY_FEATURE_DIM, 6, rng)
        x, y = rng.normal(size=TINY_FEATURE_DIM), rng.normal(size=TINY_FEATURE_DIM)
        a, b = 2.5, -0.7
        left = project_visual(a * x + b * y, projection).data
        right = a * project_visual(x, projection).data + b * project_visual(y, projection).data
        assert np.allclose(left, right, rtol=0, atol=1e-9)

    def test_gradients_reach_weights(self, rng):
        projection = VisualProjection(TINY_FEATURE_DIM, 6, rng)
        F.sum(project_visual(rng.normal(size=(TINY_GRID_CELLS, TINY_FEATURE_DIM)), projection)).backward()
        assert projection.image.weight.grad is not None

    def test_hidden_size_mismatch(self, rng):
        projection = VisualProjection(TINY_FEATURE_DIM, 6, rng)
        with pytest.raises(ConfigurationError):
            project_visual(np.zeros(TINY_FEATURE_DIM), projection, hidden_size=8)

    def test_feature_size_mismatch(self, rng):
        projection = VisualProjection(TINY_FEATURE_DIM, 6, rng)
        with pytest.raises(DimensionError):
            project_visual(np.zeros(TINY_FEATURE_DIM + 2), projection)


class TestImagePipeline:
    """Test padding, masking and category collection"""

    def test_no_images_fully_masked(self, tmp_path, tiny_model_config):
        sample = MultimodalSample(id="a", raw_text="phòng đẹp")
        out = run_image_pipeline(sample, FeatureStore(tmp_path, TINY_FEATURE_DIM, TINY_GRID_CELLS), tiny_model_config)
        assert out.visual.image_mask.all()
        assert out.visual.roi_mask.all()
        assert not out.visual.grids.any()
        assert out.image_categories == frozenset()
        assert out.roi_categories == frozenset()

    def test_padding_contract(self, tmp_path, rng, tiny_model_config):
        config = tiny_model_config.model_copy(update={"k_max": 7, "j_max": 4})
        images = (write_image(tmp_path, "i0", rng, 1), write_image(tmp_path, "i1", rng, 1))
        sample = MultimodalSample(id="a", raw_text="", images=images)
        out = run_image_pipeline(sample, FeatureStore(tmp_path, TINY_FEATURE_DIM, TINY_GRID_CELLS), config)
        assert out.visual.image_mask[0].tolist() == [False, False, True, True, True, True, True]
        assert out.visual.roi_mask[0, 0].tolist() == [False, True, True, True]
        assert out.visual.roi_mask[0, 2:].all()
        assert not out.visual.grids[0, 2:].any()
        assert not out.visual.boxes[0, 0, 1:].any()

    def test_gold_categories_preferred(self, tmp_path, rng, tiny_model_config, heads):
        image = write_image(
            tmp_path, "i0", rng, 2, categories=frozenset({AspectCategory.ROOM}), roi_categories=[AspectCategory.FOOD, None]
        )
        sample = MultimodalSample(id="a", raw_text="", images=(image,))
        store = FeatureStore(tmp_path, TINY_FEATURE_DIM, TINY_GRID_CELLS)
        out = run_image_pipeline(sample, store, tiny_model_config, heads=heads)
        assert out.image_categories == {AspectCategory.ROOM}
        predicted = ASPECTS[int(np.argmax(detect_roi_category(store.load_roi(image.rois[1].feature_ref), heads)))]
        assert out.roi_categories == {AspectCategory.FOOD, predicted}

    def test_categories_are_union_of_per_image_calls(self, tmp_path, rng, tiny_model_config, heads):
        images = tuple(write_image(tmp_path, f"i{k}", rng, 2) for k in range(3))
        sample = MultimodalSample(id="a", raw_text="", images=images)
        store = FeatureStore(tmp_path, TINY_FEATURE_DIM, TINY_GRID_CELLS)
        out = run_image_pipeline(sample, store, tiny_model_config, heads=heads, use_gold=False)
        expected_images = set()
        expected_rois = set()
        for image in images:
            expected_images |= categories_from_probabilities(detect_image_categories(store.load_grid(image.feature_ref), heads))
            for roi in image.rois:
                expected_rois.add(ASPECTS[int(np.argmax(detect_roi_category(store.load_roi(roi.feature_ref), heads)))])
        assert out.image_categories == expected_images
        assert out.roi_categories == expected_rois

    def test_without_heads_ungold_images_add_nothing(self, tmp_path, rng, tiny_model_config):
        sample = MultimodalSample(id="a", raw_text="", images=(write_image(tmp_path, "i0", rng, 1),))
        out = run_image_pipeline(sample, FeatureStore(tmp_path, TINY_FEATURE_DIM, TINY_GRID_CELLS), tiny_model_config)
        assert out.image_categories == frozenset()
        assert not out.visual.image_mask[0, 0]

    def test_missing_feature_names_ref(self, tmp_path, tiny_model_config):
        image = ImageEntry(feature_ref="features/missing.fcmt")
        sample = MultimodalSample(id="a", raw_text="", images=(image,))
        with pytest.raises(FeatureIOError, match="features/missing.fcmt"):
            run_image_pipeline(sample, FeatureStore(tmp_path, TINY_FEATURE_DIM, TINY_GRID_CELLS), tiny_model_config)

    def test_too_many_images_for_slots(self, tmp_path, rng, tiny_model_config):
        images = tuple(write_image(tmp_path, f"i{k}", rng, 0) for k in range(tiny_model_config.k_max + 1))
        sample = MultimodalSample(id="a", raw_text="", images=images)
        with pytest.raises(DataError, match="k_max"):
            run_image_pipeline(sample, FeatureStore(tmp_path, TINY_FEATURE_DIM, TINY_GRID_CELLS), tiny_model_config)
