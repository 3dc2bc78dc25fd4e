"""Diagnostics Service - End-to-end gradient check on a toy FCMF model

Builds a two-sample problem (encoder + relation + fusion + loss) with some
padded image and RoI slots, turns dropout off and compares every sampled
parameter gradient with central differences.
"""

import logging
from dataclasses import dataclass

import numpy as np

from fcmf.models.fcmf import FCMFModel
from fcmf.models.perception import VisualBatch
from fcmf.numerics.gradcheck import grad_check
from fcmf.numerics.rng import RngStreams
from fcmf.numerics.tensor import Tensor
from fcmf.schemas.config import GradCheckConfig, ModelConfig
from fcmf.schemas.report import GradCheckReport
from fcmf.schemas.sample import ASPECTS, SENTIMENTS
from fcmf.services.text_service import Vocabulary, build_auxiliary_sequence
from fcmf.services.training_service import Batch, forward_loss

logger = logging.getLogger(__name__)

TOY_WORDS = ("phòng", "sạch", "đẹp", "nhân_viên", "thân_thiện", "ồn", "xa", "ngon")
TOY_SAMPLES = 2


@dataclass
class GradCheckProblem:
    model: FCMFModel
    batch: Batch


def toy_model_config(config: GradCheckConfig) -> ModelConfig:
    return ModelConfig(
        hidden_size=config.hidden_size,
        num_layers=config.num_layers,
        heads=config.heads,
        geometry_dim=config.geometry_dim,
        feature_dim=config.feature_dim,
        grid_cells=config.grid_cells,
        max_len=config.max_len,
        k_max=config.k_max,
        j_max=config.j_max,
        dropout=0.0,
    )


def _random_boxes(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    wh = rng.uniform(0.1, 0.5, size=shape + (2,))
    xy = rng.uniform(0.0, 1.0, size=shape + (2,)) * (1.0 - wh)
    return np.concatenate([xy, wh], axis=-1)


def build_problem(config: GradCheckConfig) -> GradCheckProblem:
    """Random toy batch; the last sample has its last image slot and last RoI slots padded"""
    streams = RngStreams(config.seed)
    data_rng = streams.stream("data")
    model_config = toy_model_config(config)
    vocab = Vocabulary(TOY_WORDS)
    model = FCMFModel(len(vocab), model_config, streams.stream("init"))
    model.eval()

    s, k, j = TOY_SAMPLES, config.k_max, config.j_max
    c, f = config.grid_cells, config.feature_dim
    image_mask = np.zeros((s, k), dtype=bool)
    roi_mask = np.zeros((s, k, j), dtype=bool)
    if k > 1:
        image_mask[-1, -1] = True
        roi_mask[-1, -1, :] = True
    if j > 1:
        roi_mask[:, 0, -1] = True
    grids = data_rng.normal(size=(s, k, c, f)) * ~image_mask[..., None, None]
    rois = data_rng.normal(size=(s, k, j, f)) * ~roi_mask[..., None]
    boxes = _random_boxes(data_rng, (s, k, j)) * ~roi_mask[..., None]
    visual = VisualBatch(grids=grids, rois=rois, boxes=boxes, image_mask=image_mask, roi_mask=roi_mask)

    rows = []
    for _ in range(s):
        tokens = [TOY_WORDS[int(i)] for i in data_rng.integers(len(TOY_WORDS), size=3)]
        shown = frozenset(ASPECTS[int(i)] for i in data_rng.integers(len(ASPECTS), size=1))
        rows.extend(build_auxiliary_sequence(a, tokens, shown, shown, vocab, config.max_len).ids for a in ASPECTS)
    batch = Batch(
        sample_ids=[f"toy-{i}" for i in range(s)],
        token_ids=np.asarray(rows, dtype=np.int64),
        targets=data_rng.integers(len(SENTIMENTS), size=s * len(ASPECTS)),
        visual=visual,
        sample_index=np.repeat(np.arange(s), len(ASPECTS)),
    )
    return GradCheckProblem(model=model, batch=batch)


def check_model_gradients(config: GradCheckConfig) -> GradCheckReport:
    problem = build_problem(config)

    def loss() -> Tensor:
        return forward_loss(problem.model, problem.batch).loss

    params = problem.model.named_parameters()
    logger.info(f"Gradient check over {problem.model.num_parameters()} parameters in {len(params)} tensors")
    return grad_check(
        loss,
        params,
        eps=config.eps,
        tol=config.tol,
        n_samples=config.samples,
        rng=RngStreams(config.seed).stream("coordinates"),
    )
