"""Evaluation Service - Score a checkpoint on a dataset and write report artifacts"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fcmf.models.perception import DEFAULT_THRESHOLD
from fcmf.numerics.tensor import no_grad
from fcmf.schemas.config import EvalConfig
from fcmf.schemas.report import EvalReport
from fcmf.schemas.sample import ASPECTS, SENTIMENTS, MultimodalSample
from fcmf.services.dataset_service import FeatureStore
from fcmf.services.heads_service import load_heads
from fcmf.services.metrics_service import build_eval_report
from fcmf.services.storage_service import StorageService
from fcmf.services.training_service import LoadedCheckpoint, collate, encode_samples, forward_loss, load_checkpoint

logger = logging.getLogger(__name__)

PER_ASPECT_HEADER = ("aspect", "class", "precision", "recall", "f1")
PREDICTIONS_HEADER = ("id", "aspect", "gold", "pred")


@dataclass(frozen=True)
class Prediction:
    sample_id: str
    aspect: str
    gold: str
    pred: str


@dataclass
class EvaluationResult:
    report: EvalReport
    predictions: list[Prediction]
    loss: float


def predict(checkpoint: LoadedCheckpoint, samples: Sequence[MultimodalSample], store: FeatureStore) -> tuple[list[Prediction], float]:
    """Eval-mode predictions for every (sample, aspect) pair, in dataset then aspect order"""
    trainer = checkpoint.trainer
    config = trainer.config
    heads, threshold = None, DEFAULT_THRESHOLD
    if config.heads_checkpoint:
        loaded = load_heads(config.heads_checkpoint)
        heads, threshold = loaded.heads, loaded.threshold
    encoded = encode_samples(
        samples,
        checkpoint.vocab,
        store,
        config.model,
        config.ablation,
        heads,
        threshold,
    )
    trainer.model.eval()
    predictions: list[Prediction] = []
    total_loss, total_rows = 0.0, 0
    with no_grad():
        for start in range(0, len(encoded), config.batch_size):
            batch = collate(encoded[start : start + config.batch_size])
            out = forward_loss(trainer.model, batch)
            total_loss += out.loss.item() * len(batch.targets)
            total_rows += len(batch.targets)
            for row, (target, pred) in enumerate(zip(batch.targets, out.predictions)):
                predictions.append(
                    Prediction(
                        sample_id=batch.sample_ids[int(batch.sample_index[row])],
                        aspect=ASPECTS[row % len(ASPECTS)].value,
                        gold=SENTIMENTS[int(target)].value,
                        pred=SENTIMENTS[int(pred)].value,
                    )
                )
    return predictions, total_loss / total_rows if total_rows else 0.0


def report_from_predictions(
    predictions: Sequence[Prediction], flat: bool = False, exclude_none: bool = False, n_samples: int = 0
) -> EvalReport:
    gold: dict[str, list[str]] = {a.value: [] for a in ASPECTS}
    pred: dict[str, list[str]] = {a.value: [] for a in ASPECTS}
    for p in predictions:
        gold[p.aspect].append(p.gold)
        pred[p.aspect].append(p.pred)
    return build_eval_report(gold, pred, flat=flat, exclude_none=exclude_none, n_samples=n_samples)


def evaluate_model(
    checkpoint: str | Path | LoadedCheckpoint,
    samples: Sequence[MultimodalSample],
    store: FeatureStore,
    config: EvalConfig | None = None,
) -> EvaluationResult:
    """Predict with dropout off and score through the metrics service

    Evaluation never mutates the checkpoint, so repeated runs give identical reports.
    """
    config = config or EvalConfig()
    loaded = checkpoint if isinstance(checkpoint, LoadedCheckpoint) else load_checkpoint(checkpoint)
    predictions, loss = predict(loaded, samples, store)
    report = report_from_predictions(predictions, config.flat, config.exclude_none, n_samples=len(samples))
    logger.info(f"Evaluated {len(samples)} samples: macro-F1 {report.macro_f1:.4f} ({report.mode})")
    return EvaluationResult(report=report, predictions=predictions, loss=loss)


def per_aspect_rows(report: EvalReport) -> list[tuple[str, str, str, str, str]]:
    """Class rows and a macro row per aspect, then overall class rows and the headline macro row"""
    rows = []
    for aspect, breakdown in report.per_aspect.items():
        for cls in breakdown.classes:
            s = breakdown.per_class[cls]
            rows.append((aspect, cls, repr(s.precision), repr(s.recall), repr(s.f1)))
        rows.append(
            (aspect, "macro", repr(breakdown.macro_precision), repr(breakdown.macro_recall), repr(breakdown.macro_f1))
        )
    for cls in report.overall.classes:
        s = report.overall.per_class[cls]
        rows.append(("all", cls, repr(s.precision), repr(s.recall), repr(s.f1)))
    rows.append(("all", "macro", repr(report.macro_precision), repr(report.macro_recall), repr(report.macro_f1)))
    return rows


def write_evaluation(result: EvaluationResult, storage: StorageService) -> None:
    storage.put_json("report.json", result.report)
    storage.put_csv("per_aspect.csv", PER_ASPECT_HEADER, per_aspect_rows(result.report))
    storage.put_csv(
        "predictions.csv", PREDICTIONS_HEADER, ((p.sample_id, p.aspect, p.gold, p.pred) for p in result.predictions)
    )


def confusion_from_predictions(predictions: Sequence[Prediction]) -> np.ndarray:
    """4 x 4 gold-by-pred counts in none/negative/neutral/positive order"""
    index = {s.value: i for i, s in enumerate(SENTIMENTS)}
    matrix = np.zeros((len(SENTIMENTS), len(SENTIMENTS)), dtype=np.int64)
    for p in predictions:
        matrix[index[p.gold], index[p.pred]] += 1
    return matrix
