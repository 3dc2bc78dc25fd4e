"""Pipeline Service - Gather padded visual inputs and aspect categories per sample

For each image (in order): load the grid, decide its categories (gold when
annotated, else the image head), then for each RoI: load the vector, record
its box, decide its category (gold when annotated, else the RoI head).
Everything is padded to K image slots x J RoI slots.
"""

import logging
from dataclasses import dataclass

import numpy as np

from fcmf.exceptions import DataError
from fcmf.models.perception import (
    DEFAULT_THRESHOLD,
    CategoryHeads,
    VisualBatch,
    categories_from_probabilities,
    detect_image_categories,
    detect_roi_category,
)
from fcmf.schemas.config import ModelConfig
from fcmf.schemas.sample import ASPECTS, AspectCategory, MultimodalSample
from fcmf.services.dataset_service import FeatureStore

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineOutput:
    """One sample's visual batch (S = 1) and the category sets for the auxiliary sentence"""

    visual: VisualBatch
    image_categories: frozenset[AspectCategory]
    roi_categories: frozenset[AspectCategory]


def empty_visual_batch(config: ModelConfig) -> VisualBatch:
    k, j, c, f = config.k_max, config.j_max, config.grid_cells, config.feature_dim
    return VisualBatch(
        grids=np.zeros((1, k, c, f)),
        rois=np.zeros((1, k, j, f)),
        boxes=np.zeros((1, k, j, 4)),
        image_mask=np.ones((1, k), dtype=bool),
        roi_mask=np.ones((1, k, j), dtype=bool),
    )


def run_image_pipeline(
    sample: MultimodalSample,
    store: FeatureStore,
    config: ModelConfig,
    heads: CategoryHeads | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    use_gold: bool = True,
) -> PipelineOutput:
    """Algorithm-style pass over one sample's images and RoIs

    Args:
        sample: loaded sample
        store: feature source (shapes must match config)
        config: K/J slots, grid cells and feature size
        heads: category heads for images/RoIs without gold categories
        threshold: image-head probability threshold
        use_gold: prefer annotated categories over head predictions

    Returns:
        PipelineOutput

    Raises:
        FeatureIOError: a feature_ref cannot be read
        DataError: the sample has more images/RoIs than configured slots
    """
    if len(sample.images) > config.k_max:
        raise DataError(f"sample '{sample.id}' has {len(sample.images)} images, k_max is {config.k_max}")
    batch = empty_visual_batch(config)
    image_categories: set[AspectCategory] = set()
    roi_categories: set[AspectCategory] = set()

    for k, image in enumerate(sample.images):
        if len(image.rois) > config.j_max:
            raise DataError(f"sample '{sample.id}' image {k} has {len(image.rois)} RoIs, j_max is {config.j_max}")
        grid = store.load_grid(image.feature_ref)
        batch.grids[0, k] = grid
        batch.image_mask[0, k] = False
        if use_gold and image.categories is not None:
            image_categories.update(image.categories)
        elif heads is not None:
            image_categories.update(categories_from_probabilities(detect_image_categories(grid, heads), threshold))

        for j, roi in enumerate(image.rois):
            vector = store.load_roi(roi.feature_ref)
            batch.rois[0, k, j] = vector
            batch.boxes[0, k, j] = roi.box
            batch.roi_mask[0, k, j] = False
            if use_gold and roi.category is not None:
                roi_categories.add(roi.category)
            elif heads is not None:
                roi_categories.add(ASPECTS[int(np.argmax(detect_roi_category(vector, heads)))])

    return PipelineOutput(
        visual=batch,
        image_categories=frozenset(image_categories),
        roi_categories=frozenset(roi_categories),
    )
