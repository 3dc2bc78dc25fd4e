"""Heads Service - Train, save and load the image / RoI category heads

The image head is trained with binary cross-entropy on the six aspect
indicators of each annotated image; the RoI head with 6-way cross-entropy
on annotated RoIs. Samples without gold categories contribute nothing.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fcmf.exceptions import ConfigurationError, DataError
from fcmf.models.perception import CategoryHeads
from fcmf.numerics import functional as F
from fcmf.numerics.optim import Adam
from fcmf.numerics.rng import RngStreams
from fcmf.numerics.tensor import Tensor, as_tensor, no_grad
from fcmf.schemas.config import CheckpointManifest, HeadsConfig, stable_hash
from fcmf.schemas.report import HeadsReport
from fcmf.schemas.sample import ASPECTS, MultimodalSample
from fcmf.services.dataset_service import FeatureStore
from fcmf.services.storage_service import StorageService

logger = logging.getLogger(__name__)

HEADS_KIND = "heads"


@dataclass(frozen=True)
class HeadsExamples:
    """Stacked gold examples: pooled image targets and RoI targets"""

    grids: np.ndarray  # (n_images, cells, F)
    image_targets: np.ndarray  # (n_images, 6) in {0, 1}
    rois: np.ndarray  # (n_rois, F)
    roi_targets: np.ndarray  # (n_rois,)


@dataclass
class LoadedHeads:
    heads: CategoryHeads
    threshold: float
    manifest: CheckpointManifest


def collect_examples(samples: Sequence[MultimodalSample], store: FeatureStore) -> HeadsExamples:
    grids, image_targets, rois, roi_targets = [], [], [], []
    for sample in samples:
        for image in sample.images:
            if image.categories is not None:
                grids.append(store.load_grid(image.feature_ref))
                image_targets.append([float(a in image.categories) for a in ASPECTS])
            for roi in image.rois:
                if roi.category is not None:
                    rois.append(store.load_roi(roi.feature_ref))
                    roi_targets.append(roi.category.position)
    f, c = store.feature_dim, store.grid_cells
    return HeadsExamples(
        grids=np.asarray(grids, dtype=np.float64).reshape(-1, c, f),
        image_targets=np.asarray(image_targets, dtype=np.float64).reshape(-1, len(ASPECTS)),
        rois=np.asarray(rois, dtype=np.float64).reshape(-1, f),
        roi_targets=np.asarray(roi_targets, dtype=np.int64),
    )


def binary_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean BCE with logits; log σ(z) and log(1 - σ(z)) come from log_softmax over [0, z]"""
    pair = F.stack([F.mul(logits, 0.0), logits], axis=-1)
    log_probs = F.log_softmax(pair, axis=-1)
    one_hot = np.stack([1.0 - targets, targets], axis=-1)
    return F.neg(F.mean(F.sum(F.mul(log_probs, one_hot), axis=-1)))


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    return F.neg(F.mean(F.pick(F.log_softmax(logits, axis=-1), targets)))


def _holdout(n: int, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(n)
    n_holdout = int(round(n * fraction))
    return order[n_holdout:], order[:n_holdout]


def train_heads(
    samples: Sequence[MultimodalSample], store: FeatureStore, config: HeadsConfig
) -> tuple[CategoryHeads, HeadsReport]:
    """Full-batch Adam on both heads, then accuracy on a held-out share of the examples

    Image accuracy counts an image as correct only when every thresholded
    aspect indicator matches.

    Raises:
        DataError: no image or RoI carries gold categories
    """
    examples = collect_examples(samples, store)
    n_images, n_rois = len(examples.grids), len(examples.rois)
    if n_images == 0 and n_rois == 0:
        raise DataError("no annotated images or RoIs to train category heads on")

    streams = RngStreams(config.seed)
    heads = CategoryHeads(config.feature_dim, streams.stream("init"), grid_cells=config.grid_cells)
    split_rng = streams.stream("split")
    image_train, image_test = _holdout(n_images, config.holdout_fraction, split_rng)
    roi_train, roi_test = _holdout(n_rois, config.holdout_fraction, split_rng)

    optimizer = Adam(heads.named_parameters(), lr=config.learning_rate)
    image_loss_value = roi_loss_value = None
    for epoch in range(1, config.epochs + 1):
        optimizer.zero_grad()
        losses: list[Tensor] = []
        if len(image_train):
            image_loss = binary_cross_entropy(
                heads.image_logits(as_tensor(examples.grids[image_train])), examples.image_targets[image_train]
            )
            losses.append(image_loss)
            image_loss_value = image_loss.item()
        if len(roi_train):
            roi_loss = cross_entropy(heads.roi_logits(as_tensor(examples.rois[roi_train])), examples.roi_targets[roi_train])
            losses.append(roi_loss)
            roi_loss_value = roi_loss.item()
        if not losses:
            break
        total = losses[0] if len(losses) == 1 else F.add(losses[0], losses[1])
        total.backward()
        optimizer.step()
        if epoch % 20 == 0 or epoch == config.epochs:
            logger.debug(f"Heads epoch {epoch}: image loss {image_loss_value}, roi loss {roi_loss_value}")

    report = HeadsReport(
        image_examples=n_images,
        roi_examples=n_rois,
        final_image_loss=image_loss_value,
        final_roi_loss=roi_loss_value,
    )
    with no_grad():
        if len(image_test):
            probs = F.sigmoid(heads.image_logits(as_tensor(examples.grids[image_test]))).data
            decided = probs >= config.threshold
            report.image_accuracy = float(np.mean(np.all(decided == (examples.image_targets[image_test] > 0.5), axis=-1)))
        if len(roi_test):
            predicted = np.argmax(heads.roi_logits(as_tensor(examples.rois[roi_test])).data, axis=-1)
            report.roi_accuracy = float(np.mean(predicted == examples.roi_targets[roi_test]))
    logger.info(
        f"Trained category heads on {n_images} images / {n_rois} RoIs "
        f"(holdout image acc {report.image_accuracy}, RoI acc {report.roi_accuracy})"
    )
    return heads, report


def save_heads(heads: CategoryHeads, config: HeadsConfig, storage: StorageService) -> None:
    """manifest.json (kind "heads", threshold in config) + params/*.fcmt"""
    payload = config.model_dump(mode="json")
    manifest = CheckpointManifest(
        command="heads-train",
        seed=config.seed,
        config=payload,
        config_hash=stable_hash(payload),
        kind=HEADS_KIND,
    )
    storage.delete_prefix("params")
    storage.put_tensors("params", heads.state_dict())
    storage.write_manifest(manifest)


def load_heads(path: str | Path) -> LoadedHeads:
    """Raises ConfigurationError when `path` is not a heads checkpoint"""
    storage = StorageService(path)
    manifest = CheckpointManifest.model_validate(storage.read_manifest())
    if manifest.kind != HEADS_KIND:
        raise ConfigurationError(f"{path} holds a '{manifest.kind}' checkpoint, not category heads")
    config = HeadsConfig.model_validate(manifest.config)
    heads = CategoryHeads(config.feature_dim, RngStreams(config.seed).stream("init"), grid_cells=config.grid_cells)
    heads.load_state_dict(storage.get_tensors("params"))
    return LoadedHeads(heads=heads, threshold=config.threshold, manifest=manifest)
